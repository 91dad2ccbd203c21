#!/usr/bin/env python3
"""Regenerate the DSP golden fixtures.

Writes three 16-bit PCM WAV inputs and the matching 224x224x3 tensors
produced by reference_pipeline.preprocess:

    silence_1s.wav   16000 Hz, 1.0 s of zeros
    sine_1khz_1s.wav 22050 Hz, 1.0 s, 1 kHz at amplitude 0.5
    chirp_2s.wav     44100 Hz, 2.0 s, linear sweep 100 Hz -> 3900 Hz, amplitude 0.5

The tensors are read back from the quantized WAV so they describe exactly
what the C++ frontend sees. Run once and commit; never regenerate to make a
failing test pass.

    python3 tools/golden/make_golden.py tests/data/golden
"""

import pathlib
import sys

import numpy as np

import reference_pipeline as rp


def fixtures():
    sr = 16000
    yield "silence_1s", np.zeros(sr), sr

    sr = 22050
    t = np.arange(sr) / sr
    yield "sine_1khz_1s", 0.5 * np.sin(2 * np.pi * 1000.0 * t), sr

    sr = 44100
    dur = 2.0
    t = np.arange(int(sr * dur)) / sr
    f0, f1 = 100.0, 3900.0
    phase = 2 * np.pi * (f0 * t + (f1 - f0) / (2 * dur) * t**2)
    yield "chirp_2s", 0.5 * np.sin(phase), sr


def main(out_dir):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, samples, rate in fixtures():
        wav = out / f"{name}.wav"
        rp.write_wav(wav, samples, rate)
        decoded, decoded_rate = rp.read_wav(wav)
        tensor = rp.preprocess(decoded, decoded_rate)
        rp.write_mst(out / f"{name}.golden.mst", tensor)
        print(f"{name}: rate={rate} n={len(samples)} mean={tensor.mean():+.3e} std={tensor.std():.6f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/golden")
