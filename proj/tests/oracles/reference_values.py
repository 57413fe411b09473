#!/usr/bin/env python3
"""Standalone reference computations frozen into tests/unit/reference_values.inc.

Written independently of the C++ code: numpy rfft for the spectrum, scipy's
orthonormal DCT-II, a pure-Python MT19937-64 for the hashed word vectors.
Run: python3 tests/oracles/reference_values.py > tests/unit/reference_values.inc
"""
import numpy as np
from scipy.fft import dct

SR = 16000.0
L = 4000
W = 400
N_MEL = 40


def mel(hz):
    return 2595.0 * np.log10(1.0 + hz / 700.0)


def imel(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mfcc_reference(x, w, sr):
    nfft = 1 << (w - 1).bit_length()
    frames = -(-len(x) // w)
    padded = np.zeros(frames * w)
    padded[: len(x)] = x
    n = np.arange(w)
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * n / (w - 1))
    freqs = np.arange(nfft // 2 + 1) * sr / nfft
    edges = imel(np.linspace(0.0, mel(sr / 2), N_MEL + 2))
    bank = np.zeros((N_MEL, len(freqs)))
    for m in range(N_MEL):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs > lo) & (freqs <= mid)
        down = (freqs > mid) & (freqs < hi)
        bank[m, up] = (freqs[up] - lo) / (mid - lo)
        bank[m, down] = (hi - freqs[down]) / (hi - mid)
    ceps = np.zeros((14, frames))
    for f in range(frames):
        seg = padded[f * w:(f + 1) * w] * hann
        power = np.abs(np.fft.rfft(seg, nfft)) ** 2
        logmel = np.log(np.maximum(bank @ power, 1e-10))
        ceps[:, f] = dct(logmel, type=2, norm="ortho")[:14]
    d1 = np.zeros((13, frames))
    d1[:, :-1] = ceps[1:, 1:] - ceps[1:, :-1]
    d2 = np.zeros((13, frames))
    d2[:, :-1] = d1[:, 1:] - d1[:, :-1]
    return np.vstack([ceps, d1, d2])


class MT64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & 0xFFFFFFFFFFFFFFFF
        for i in range(1, 312):
            self.mt[i] = (6364136223846793005 * (self.mt[i - 1] ^ (self.mt[i - 1] >> 62)) + i) & 0xFFFFFFFFFFFFFFFF
        self.idx = 312

    def next(self):
        if self.idx >= 312:
            for i in range(312):
                x = (self.mt[i] & 0xFFFFFFFF80000000) | (self.mt[(i + 1) % 312] & 0x7FFFFFFF)
                xa = x >> 1
                if x & 1:
                    xa ^= 0xB5026F5AA96619E9
                self.mt[i] = self.mt[(i + 156) % 312] ^ xa
            self.idx = 0
        y = self.mt[self.idx]
        self.idx += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & 0xFFFFFFFFFFFFFFFF


def fnv1a64(s):
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def hashed(word):
    eng = MT64(fnv1a64(word))
    v = np.array([(eng.next() >> 11) * 2.0 ** -53 * 2.0 - 1.0 for _ in range(300)])
    return v / np.sqrt(np.sum(v * v))


def main():
    t = np.arange(L) / SR
    x = 0.5 * np.sin(2 * np.pi * 440.0 * t)
    m = mfcc_reference(x, W, SR)
    print("// Generated by tests/oracles/reference_values.py; do not edit.")
    print(f"constexpr std::size_t kRefMfccLength = {L};")
    print(f"constexpr std::size_t kRefMfccWindow = {W};")
    print(f"constexpr std::size_t kRefMfccColumns = {m.shape[1]};")
    print("constexpr double kRefMfcc[] = {")
    for row in m:
        print("  " + ", ".join(repr(float(v)) for v in row) + ",")
    print("};")
    print(f"constexpr std::uint64_t kRefFnvExcited = {fnv1a64('excited')}ULL;")
    v = hashed("excited")
    print("constexpr double kRefExcited[] = {" + ", ".join(repr(float(a)) for a in v[:8]) + "};")


if __name__ == "__main__":
    main()
