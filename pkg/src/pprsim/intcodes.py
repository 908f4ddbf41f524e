"""Prefix-free integer codes for transmitting the PPR index.

Bit strings are plain ``str`` of '0'/'1', most significant bit first.
"""
import math

from scipy.special import zeta


def elias_delta_encode(k: int) -> str:
    if k < 1:
        raise ValueError("Elias delta needs k >= 1")
    n = k.bit_length() - 1
    n1 = n + 1
    l = n1.bit_length() - 1
    return "0" * l + format(n1, "b") + format(k, "b")[1:]


def elias_delta_decode(bits: str, pos: int = 0):
    """Decode one codeword starting at ``pos``; returns (k, next_pos)."""
    l = 0
    while pos + l < len(bits) and bits[pos + l] == "0":
        l += 1
    end = pos + 2 * l + 1
    if end > len(bits):
        raise ValueError("truncated Elias delta codeword")
    n1 = int(bits[pos + l:end], 2)
    stop = end + n1 - 1
    if stop > len(bits):
        raise ValueError("truncated Elias delta codeword")
    k = int("1" + bits[end:stop], 2)
    return k, stop


def elias_delta_length(k: int) -> int:
    n = k.bit_length() - 1
    return n + 2 * (n + 1).bit_length() - 1


def zeta_value(lam: float) -> float:
    if lam <= 1:
        raise ValueError("lambda must exceed 1")
    return float(zeta(lam))


def choose_lambda(mean_log2_k: float) -> float:
    if mean_log2_k <= 0:
        raise ValueError("mean log2 K must be positive")
    return 1.0 + 1.0 / mean_log2_k


def zipf_shannon_length(k, lam: float) -> int:
    """Shannon code length ceil(-log2 p(k)) for p(k) = k^-lam / zeta(lam)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.ceil(lam * math.log2(k) + math.log2(zeta_value(lam)))


def expected_size_bounds(mean_log2_k: float):
    e = mean_log2_k
    return e + 2 * math.log2(e + 1) + 1, e + math.log2(e + 1) + 2
