"""Shared corpus generators for the test suite."""

from __future__ import annotations

import math

import numpy as np

from ztnc import FORMATS, Fp4Tensor, LAYOUTS, formats, synth


def gauss_bf16(rng: np.random.Generator, n: int, sigma: float = 0.02) -> bytes:
    return synth.quantize_bf16(rng.normal(0.0, sigma, n).astype(np.float32))


def gauss_fp8(rng: np.random.Generator, n: int, sigma: float = 0.02, name: str = "FP8_E4M3") -> bytes:
    return synth.quantize_fp8(rng.normal(0.0, sigma, n), FORMATS[name])


def uniform_bytes(rng: np.random.Generator, n: int) -> bytes:
    return rng.integers(0, 256, n, np.uint8).tobytes()


def skewed_bytes(rng: np.random.Generator, n: int, alphabet: int = 6) -> bytes:
    """Zipf-flavored draw over a small alphabet; compresses well."""
    symbols = rng.choice(256, alphabet, replace=False)
    weights = 1.0 / np.arange(1, alphabet + 1)
    return symbols[
        rng.choice(alphabet, n, p=weights / weights.sum())
    ].astype(np.uint8).tobytes()


def random_fp4(rng: np.random.Generator, scheme: str, element_count: int) -> Fp4Tensor:
    layout = LAYOUTS[scheme]
    nibbles = uniform_bytes(rng, (element_count + 1) // 2)
    if element_count % 2:
        nibbles = nibbles[:-1] + bytes([nibbles[-1] & 0xF0])  # zero pad nibble
    blocks = (element_count + layout.block_size - 1) // layout.block_size
    return Fp4Tensor(layout, element_count, nibbles, uniform_bytes(rng, blocks))


def quantized_fp4(rng: np.random.Generator, scheme: str, element_count: int) -> Fp4Tensor:
    return synth.quantize_fp4(rng.normal(0.0, 1.0, element_count), LAYOUTS[scheme])


def perturbed_bf16(rng: np.random.Generator, base_vals: np.ndarray, fraction: float) -> bytes:
    """Re-quantize base_vals with noise added to a fraction of elements."""
    cur = base_vals.copy()
    k = int(len(cur) * fraction)
    if k:
        idx = rng.choice(len(cur), k, replace=False)
        cur[idx] += rng.normal(0.0, 0.1, k).astype(np.float32)
    return synth.quantize_bf16(cur)


def brute_force_optimal_bits(counts: dict[int, int]) -> int:
    """Minimum weighted code length over all prefix codes on these symbols.

    Enumerates non-decreasing length vectors with Kraft equality; an optimal
    prefix code always exists in that family with larger weights taking the
    shorter lengths.
    """
    weights = sorted(counts.values(), reverse=True)
    k = len(weights)
    if k == 1:
        return weights[0]  # single symbol: one bit, by decision
    best = math.inf

    def rec(vec, kraft_left):
        nonlocal best
        if len(vec) == k:
            if kraft_left == 0:
                best = min(best, sum(w * l for w, l in zip(weights, vec)))
            return
        lo = vec[-1] if vec else 1
        remaining = k - len(vec)
        for l in range(lo, k):
            unit = 2 ** (k - l)  # Kraft in units of 2^-k
            if unit * remaining < kraft_left:
                continue  # even max-rate tail cannot fill the budget
            if unit > kraft_left:
                break
            rec(vec + [l], kraft_left - unit)

    rec([], 2 ** k)
    return best
