#!/usr/bin/env python3
"""Straight-line numpy reimplementation of the clip preprocessing pipeline.

Used only to produce the frozen golden tensors under tests/data/golden and to
cross-check the C++ frontend. Everything is float64 until the final cast.

    resample (windowed-sinc, Hann window, 6 zero crossings, rolloff 0.99)
    -> |STFT|^2 (n_fft 1024, hop 256, periodic Hann, centered reflect pad)
    -> Slaney mel filterbank (224 filters, 0..4000 Hz, area normalized)
    -> log(x + 1e-6), per-image standardization (population std)
    -> bilinear resize of the time axis to 224 (half-pixel centers)
    -> tile to 224 x 224 x 3
"""

import math
import struct
import wave

import numpy as np

TARGET_RATE = 11025
N_FFT = 1024
HOP = 256
N_MELS = 224
F_MIN = 0.0
F_MAX = 4000.0
LOG_OFFSET = 1e-6
OUT_FRAMES = 224


def read_wav(path):
    with wave.open(str(path), "rb") as w:
        channels = w.getnchannels()
        width = w.getsampwidth()
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    if width != 2:
        raise ValueError("reference reader handles 16-bit PCM only")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    pcm = pcm.reshape(-1, channels).mean(axis=1)
    return pcm, rate


def write_wav(path, samples, rate):
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())


def resample(x, orig, new, zero_crossings=6, rolloff=0.99):
    if orig == new:
        return x.copy()
    g = math.gcd(orig, new)
    orig //= g
    new //= g
    base = min(orig, new) * rolloff
    width = math.ceil(zero_crossings * orig / base)
    idx = np.arange(-width, width + orig, dtype=np.float64) / orig
    t = (-np.arange(new, dtype=np.float64) / new)[:, None] + idx[None, :]
    t *= base
    t = np.clip(t, -zero_crossings, zero_crossings)
    window = np.cos(t * math.pi / zero_crossings / 2.0) ** 2
    t *= math.pi
    with np.errstate(invalid="ignore", divide="ignore"):
        kern = np.where(t == 0.0, 1.0, np.sin(t) / t)
    kern *= window * (base / orig)
    padded = np.concatenate([np.zeros(width), x, np.zeros(width + orig)])
    n_out_blocks = (len(padded) - kern.shape[1]) // orig + 1
    out = np.empty((n_out_blocks, new))
    for i in range(n_out_blocks):
        seg = padded[i * orig : i * orig + kern.shape[1]]
        out[i] = kern @ seg
    target = math.ceil(new * len(x) / orig)
    return out.reshape(-1)[:target]


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3.0
    logstep = math.log(6.4) / 27.0
    mel = f / f_sp
    high = f >= 1000.0
    mel = np.where(high, 15.0 + np.log(np.maximum(f, 1e-300) / 1000.0) / logstep, mel)
    return mel


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3.0
    logstep = math.log(6.4) / 27.0
    f = m * f_sp
    return np.where(m >= 15.0, 1000.0 * np.exp(logstep * (m - 15.0)), f)


def mel_filterbank(rate=TARGET_RATE):
    n_freqs = N_FFT // 2 + 1
    freqs = np.arange(n_freqs, dtype=np.float64) * rate / N_FFT
    m_pts = np.linspace(hz_to_mel(F_MIN), hz_to_mel(F_MAX), N_MELS + 2)
    f_pts = mel_to_hz(m_pts)
    fb = np.zeros((N_MELS, n_freqs))
    for m in range(N_MELS):
        lo, c, hi = f_pts[m], f_pts[m + 1], f_pts[m + 2]
        for k, f in enumerate(freqs):
            down = (f - lo) / (c - lo)
            up = (hi - f) / (hi - c)
            fb[m, k] = max(0.0, min(down, up))
        fb[m] *= 2.0 / (hi - lo)
    return fb, f_pts


def reflect_index(i, n):
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


def power_spectrogram(x):
    n = len(x)
    pad = N_FFT // 2
    idx = [reflect_index(i - pad, n) for i in range(n + 2 * pad)]
    padded = x[idx]
    window = 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(N_FFT) / N_FFT)
    frames = 1 + n // HOP
    spec = np.empty((N_FFT // 2 + 1, frames))
    for t in range(frames):
        seg = padded[t * HOP : t * HOP + N_FFT] * window
        spec[:, t] = np.abs(np.fft.rfft(seg)) ** 2
    return spec


def mel_spectrogram(x):
    fb, _ = mel_filterbank()
    return fb @ power_spectrogram(x)


def log_normalize(m):
    lg = np.log(m + LOG_OFFSET)
    mean = lg.mean()
    std = math.sqrt(((lg - mean) ** 2).mean())
    if std == 0.0:
        return np.zeros_like(lg)
    return (lg - mean) / std


def resize_time(m, out=OUT_FRAMES):
    rows, cols = m.shape
    res = np.empty((rows, out))
    scale = cols / out
    for j in range(out):
        src = (j + 0.5) * scale - 0.5
        src = min(max(src, 0.0), cols - 1)
        j0 = int(math.floor(src))
        j1 = min(j0 + 1, cols - 1)
        a = src - j0
        res[:, j] = (1.0 - a) * m[:, j0] + a * m[:, j1]
    return res


def preprocess(samples, rate):
    x = resample(samples, rate, TARGET_RATE)
    img = resize_time(log_normalize(mel_spectrogram(x)))
    return np.repeat(img[:, :, None], 3, axis=2).astype("<f4")


def write_mst(path, tensor):
    with open(path, "wb") as f:
        f.write(b"224 224 3\n")
        f.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def read_mst(path):
    with open(path, "rb") as f:
        header = f.readline()
        if header.split() != [b"224", b"224", b"3"]:
            raise ValueError("bad header")
        data = np.frombuffer(f.read(), dtype="<f4")
    return data.reshape(224, 224, 3)
