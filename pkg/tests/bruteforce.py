"""Independent reference computations the production code is checked against."""

from __future__ import annotations

import itertools
import math

import numpy as np


def one_hot(symbols, size: int = 12) -> np.ndarray:
    """Encode a symbol string as orthogonal unit chroma rows."""
    alphabet = sorted(set(symbols))
    return np.eye(size)[[alphabet.index(s) for s in symbols]]


def factors(s: str) -> set[str]:
    return {s[i:j] for i in range(len(s)) for j in range(i + 1, len(s) + 1)}


def occurs_twice(prefix: str, w: str) -> bool:
    first = prefix.find(w)
    return first != -1 and prefix.find(w, first + 1) != -1


def longest_repeated_suffix(prefix: str) -> int:
    for length in range(len(prefix) - 1, 0, -1):
        if occurs_twice(prefix, prefix[-length:]):
            return length
    return 0


def prefix_repeats(s: str) -> tuple[list[int], list[int]]:
    """``(lrs, sfx)`` for every prefix of ``s``, state-indexed like the oracle (state 0 first).

    Uses lrs(i) <= lrs(i-1) + 1 to bound the search; every length is still
    checked by plain substring search.
    """
    lrs, sfx = [0], [-1]
    for i in range(1, len(s) + 1):
        prefix = s[:i]
        length = min(i - 1, lrs[-1] + 1)
        while length > 0 and not occurs_twice(prefix, prefix[-length:]):
            length -= 1
        lrs.append(length)
        sfx.append(prefix.find(prefix[-length:]) + length if length else 0)
    return lrs, sfx


def suffix_link(prefix: str) -> int:
    """State at the end of the first occurrence of the longest repeated suffix."""
    length = longest_repeated_suffix(prefix)
    if length == 0:
        return 0
    return prefix.find(prefix[-length:]) + length


def restricted_growth_strings(length: int, alphabet: str):
    """Every string up to relabeling: symbol k appears only after symbol k-1."""
    def rec(prefix, used):
        if len(prefix) == length:
            yield prefix
            return
        for k in range(min(used + 1, len(alphabet))):
            yield from rec(prefix + alphabet[k], max(used, k + 1))
    yield from rec("", 0)


def conv2d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Nested-loop 3x3 same-padding convolution. x: (C, H, W), w: (O, C, 3, 3)."""
    c_in, h, wd = x.shape
    out = np.zeros((w.shape[0], h, wd))
    for o in range(w.shape[0]):
        for i in range(h):
            for j in range(wd):
                acc = b[o]
                for c in range(c_in):
                    for di in range(3):
                        for dj in range(3):
                            ii, jj = i + di - 1, j + dj - 1
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += w[o, c, di, dj] * x[c, ii, jj]
                out[o, i, j] = acc
    return out


def maxpool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    out = np.zeros((c, h // 2, w // 2))
    for k in range(c):
        for i in range(h // 2):
            for j in range(w // 2):
                out[k, i, j] = max(x[k, 2 * i + a, 2 * j + b] for a in range(2) for b in range(2))
    return out


def ir_from_blocks(blocks) -> list[float]:
    """Per-frame IR from (length, is_copy) blocks by plain arithmetic."""
    out = []
    alphabet = codewords = 0
    for length, is_copy in blocks:
        codewords += 1
        alphabet += 0 if is_copy else 1
        for _ in range(length):
            out.append(max(0.0, math.log2(alphabet) - math.log2(codewords) / length))
    return out


def min_block_parse(s: str) -> int:
    """Fewest blocks partitioning ``s`` into single literals and back-copies."""
    n = len(s)
    best = [math.inf] * (n + 1)
    best[0] = 0
    for end in range(1, n + 1):
        best[end] = best[end - 1] + 1
        for start in range(1, end):
            piece = s[start:end]
            if any(s[p:p + len(piece)] == piece for p in range(start)):
                best[end] = min(best[end], best[start] + 1)
    return best[n]
