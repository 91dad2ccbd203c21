#!/usr/bin/env python3
"""Export torchvision EfficientNet-B0 `features` weights to the TJWCKPT1 container.

    export_backbone_weights.py weights/efficientnet_b0_imagenet.tjw
        ImageNet weights (EfficientNet_B0_Weights.IMAGENET1K_V1; torchvision
        downloads them on first use).

    export_backbone_weights.py --random-init --seed 3 out.tjw --fixture out.fixture.json
        Seeded random weights plus a reference input/output pair, used by the
        C++ equivalence test. No download needed.
"""

import argparse
import hashlib
import json
import struct
import sys

import torch
import torchvision

MAGIC = b"TJWCKPT1"
VERSION = 1
DTYPES = {torch.float32: 0, torch.int64: 1}


def write_weight_file(path, metadata, tensors):
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    meta = json.dumps(metadata, separators=(",", ":")).encode()
    out += struct.pack("<Q", len(meta)) + meta
    out += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        if t.dtype not in DTYPES:
            raise SystemExit(f"unsupported dtype {t.dtype} for {name}")
        raw = name.encode()
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<BI", DTYPES[t.dtype], t.dim())
        out += b"".join(struct.pack("<q", d) for d in t.shape)
        out += t.numpy().astype(t.numpy().dtype.newbyteorder("<"), copy=False).tobytes()
    digest = hashlib.sha256(out).digest()
    with open(path, "wb") as f:
        f.write(out + digest)
    return digest.hex()


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out")
    ap.add_argument("--random-init", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fixture", help="also write a reference forward pass here (JSON)")
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    if args.random_init:
        net = torchvision.models.efficientnet_b0(weights=None)
        source = f"torchvision efficientnet_b0 random init, seed {args.seed}"
        # spread BN statistics away from (0, 1) so loading them is actually exercised
        for m in net.features.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                m.running_mean.uniform_(-0.1, 0.1)
                m.running_var.uniform_(0.5, 1.5)
                m.weight.data.uniform_(0.5, 1.5)
                m.bias.data.uniform_(-0.1, 0.1)
    else:
        weights = torchvision.models.EfficientNet_B0_Weights.IMAGENET1K_V1
        net = torchvision.models.efficientnet_b0(weights=weights)
        source = f"torchvision {weights}"
    net.eval()

    tensors = {k: v for k, v in net.state_dict().items() if k.startswith("features.")}
    meta = {"kind": "backbone", "source": source, "torchvision": torchvision.__version__}
    checksum = write_weight_file(args.out, meta, tensors)
    print(f"{len(tensors)} tensors -> {args.out} ({checksum})")

    if args.fixture:
        g = torch.Generator().manual_seed(args.seed + 1)
        x = torch.randn(1, 3, 224, 224, generator=g)
        with torch.no_grad():
            pooled = torch.nn.functional.adaptive_avg_pool2d(net.features(x), 1).flatten(1)
        with open(args.fixture, "w") as f:
            json.dump({"input": x.flatten().tolist(), "pooled": pooled.flatten().tolist()}, f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
