"""Variable Markov Oracle, Compror-style block parsing, and Information Rate.

The oracle is the classic online Factor Oracle in which symbol equality is
replaced by ``distance <= theta`` between feature frames. State ``i >= 1``
stands for frame ``i - 1``. A forward transition into state ``j`` is labeled
by frame ``j - 1``, so labels and targets coincide and only targets are
stored.

Information Rate is measured per frame as the coding-length saving of the
block parse over coding every frame individually:

* ``C0(n) = log2(a_n)``, with ``a_n`` the number of distinct symbols (frames
  that opened a literal) among frames ``0..n``. Coding a frame on its own
  costs naming one symbol of the alphabet discovered so far.
* ``C1(n) = log2(k_n) / L``, with ``k_n`` the number of code words emitted
  up to and including the block that holds frame ``n`` and ``L`` that
  block's length. A copy amortizes one code word over its frames; a literal
  pays a whole code word.

``IR(n) = max(0, C0(n) - C1(n))``. An all-literal parse gives ``a_n = k_n``
and ``L = 1`` everywhere, hence zero IR; at a threshold so large that every
frame merges into one symbol ``a_n = 1`` and IR is zero again. The useful
thresholds sit in between, which is what :func:`sweep_threshold` searches.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .features import DEDUP_TOL, ChromaSequence, TooShort, candidate_thresholds, distance_matrix

NO_STATE = -1  # the undefined suffix link of state 0


class EmptySequence(ValueError):
    pass


class ParseMismatch(ValueError):
    pass


@dataclass
class FactorOracle:
    theta: float
    frames: np.ndarray  # (N, dim) feature rows the oracle was built over
    trn: list[list[int]] = field(default_factory=lambda: [[]])
    sfx: list[int] = field(default_factory=lambda: [NO_STATE])
    lrs: list[int] = field(default_factory=lambda: [0])
    fo_sfx: list[int] = field(default_factory=lambda: [NO_STATE])
    fo_lrs: list[int] = field(default_factory=lambda: [0])

    @property
    def num_states(self) -> int:
        return len(self.sfx)

    @property
    def num_frames(self) -> int:
        return len(self.sfx) - 1

    def data(self, state: int) -> int:
        """Frame index carried by ``state`` (``state >= 1``)."""
        return state - 1

    def transitions(self, state: int) -> list[tuple[int, int]]:
        """``(label, target)`` pairs; the label is the state whose frame is the symbol."""
        return [(t, t) for t in self.trn[state]]

    def step(self, state: int, frame: np.ndarray, theta: float | None = None) -> int | None:
        """Follow the nearest matching forward transition for ``frame``, if any."""
        theta = self.theta if theta is None else theta
        targets = self.trn[state]
        if not targets:
            return None
        d = np.linalg.norm(self.frames[np.asarray(targets) - 1] - frame, axis=1)
        ok = np.flatnonzero(d <= theta + DEDUP_TOL)
        if not len(ok):
            return None
        # nearest wins; ties go to the smallest label
        best = min(ok, key=lambda j: (d[j], targets[j]))
        return targets[best]

    def accepts(self, frames: Iterable[np.ndarray]) -> bool:
        state = 0
        for frame in frames:
            state = self.step(state, np.asarray(frame, dtype=float))
            if state is None:
                return False
        return True


def _nearest_match(targets: list[int], row: np.ndarray, theta: float) -> int | None:
    best = None
    best_d = math.inf
    for t in targets:
        d = row[t - 1]
        if d <= theta and (d < best_d or (d == best_d and t < best)):
            best, best_d = t, d
    return best


def _common_suffix_length(sfx: list[int], lrs: list[int], p1: int, p2: int) -> int:
    if p2 == sfx[p1]:
        return lrs[p1]
    while sfx[p2] != sfx[p1]:
        p2 = sfx[p2]
    return min(lrs[p1], lrs[p2])


def skew(dist: np.ndarray) -> np.ndarray:
    """``out[lag, t] = dist[t, t - lag]``, +inf where ``t < lag``; row 0 is unused."""
    n = len(dist)
    t = np.arange(n)
    cols = t[None, :] - t[:, None]
    return np.where(cols >= 0, dist[t[None, :], np.maximum(cols, 0)], np.inf)


def repeated_suffixes(skewed: np.ndarray, theta: float) -> tuple[list[int], list[int]]:
    """Exact longest repeated suffix (``lrs``) and its first occurrence (``sfx``) per state.

    Frame ``t`` continues a repeat at lag ``d`` while ``dist[t - k, t - d - k] <= theta``
    for ``k = 0..L-1``; runs are read off every lag at once.
    """
    n = skewed.shape[0]
    if n < 2:
        return [0] * (n + 1), [NO_STATE] + [0] * n
    hit = skewed[1:] <= theta + DEDUP_TOL
    t = np.arange(n)
    last_miss = np.maximum.accumulate(np.where(hit, -1, t), axis=1)
    runs = t - last_miss  # (lags 1..n-1, n)
    best = runs.max(axis=0)
    # earliest occurrence = largest lag among the maxima
    lag = (n - 1) - np.argmax((runs == best)[::-1], axis=0)
    lrs = [0] + best.tolist()
    sfx = [NO_STATE] + [int(f - g + 1) if b > 0 else 0 for f, g, b in zip(t.tolist(), lag.tolist(), best.tolist())]
    return lrs, sfx


def build_oracle(frames, theta: float, dist: np.ndarray | None = None) -> FactorOracle:
    """Online left-to-right construction with threshold matching.

    Forward transitions come from the incremental Factor Oracle walk, using
    its own construction links (kept as ``fo_sfx``). Those links only bound
    the repeated suffix from below, so the published ``sfx``/``lrs`` are
    computed exactly from the thresholded distances instead.

    ``dist`` may carry a precomputed :func:`distance_matrix` of ``frames`` so a
    threshold sweep does not recompute it per candidate.
    """
    x = frames.frames if isinstance(frames, ChromaSequence) else np.asarray(frames, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) == 0:
        raise EmptySequence("cannot build an oracle over zero frames")
    if theta < 0:
        raise ValueError(f"theta must be non-negative, got {theta}")
    if dist is None:
        dist = distance_matrix(x)
    tol_theta = theta + DEDUP_TOL

    trn: list[list[int]] = [[]]
    fo_sfx = [NO_STATE]
    fo_lrs = [0]
    for i in range(1, len(x) + 1):
        row = dist[i - 1]
        trn.append([])
        trn[i - 1].append(i)
        p1 = i - 1
        k = fo_sfx[i - 1]
        match = None
        while k != NO_STATE:
            match = _nearest_match(trn[k], row, tol_theta)
            if match is not None:
                break
            trn[k].append(i)
            p1 = k
            k = fo_sfx[k]
        if k == NO_STATE:
            fo_sfx.append(0)
            fo_lrs.append(0)
        else:
            fo_sfx.append(match)
            fo_lrs.append(_common_suffix_length(fo_sfx, fo_lrs, p1, match - 1) + 1)
    lrs, sfx = repeated_suffixes(skew(dist), theta)
    return FactorOracle(theta=theta, frames=x, trn=trn, sfx=sfx, lrs=lrs, fo_sfx=fo_sfx, fo_lrs=fo_lrs)


# ---------------------------------------------------------------------------
# Compression parse
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    start: int
    length: int
    pointer: int | None = None  # None marks a literal

    @property
    def is_copy(self) -> bool:
        return self.pointer is not None


@dataclass
class CompressionParse:
    blocks: list[Block]

    @property
    def num_frames(self) -> int:
        return sum(b.length for b in self.blocks)

    def validate(self, num_frames: int) -> None:
        pos = 0
        for b in self.blocks:
            if b.start != pos or b.length < 1:
                raise ParseMismatch(f"block {b} does not continue the partition at frame {pos}")
            if b.is_copy and not 0 <= b.pointer < b.start:
                raise ParseMismatch(f"copy block {b} points at or after its own start")
            if not b.is_copy and b.length != 1:
                raise ParseMismatch(f"literal block {b} longer than one frame")
            pos += b.length
        if pos != num_frames:
            raise ParseMismatch(f"parse covers {pos} frames, oracle has {num_frames}")


def _greedy_blocks(lrs: list[int], sfx: list[int]) -> list[Block]:
    n = len(lrs) - 1
    blocks: list[Block] = []
    j = 0  # frames 0..j-1 are encoded
    while j < n:
        i = j
        # state i+1 carries frame i; a copy of length i-j+1 ends there if lrs allows it
        while i < n and lrs[i + 1] >= i - j + 1:
            i += 1
        if i == j:
            blocks.append(Block(j, 1))
            j += 1
        else:
            length = i - j
            # sfx[i] is state-indexed; its frame is sfx[i] - 1
            blocks.append(Block(j, length, sfx[i] - length))
            j = i
    return blocks


def compror_encode(oracle: FactorOracle) -> CompressionParse:
    """Greedy parse: grow a copy while the suffix structure keeps it repeated."""
    return CompressionParse(_greedy_blocks(oracle.lrs, oracle.sfx))


# ---------------------------------------------------------------------------
# Information Rate
# ---------------------------------------------------------------------------


@dataclass
class IRProfile:
    per_frame: list[float]
    theta: float
    c0: list[float]
    c1: list[float]
    parse: CompressionParse | None = None

    @property
    def total(self) -> float:
        return math.fsum(self.per_frame)

    @property
    def c0_total(self) -> float:
        return math.fsum(self.c0)

    @property
    def c1_total(self) -> float:
        return math.fsum(self.c1)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "total": self.total,
            "c0_total": self.c0_total,
            "c1_total": self.c1_total,
            "per_frame": list(self.per_frame),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _coding_costs(blocks: list[Block]) -> tuple[list[float], list[float]]:
    c0: list[float] = []
    c1: list[float] = []
    alphabet = 0
    codewords = 0
    for block in blocks:
        codewords += 1
        if not block.is_copy:
            alphabet += 1
        c0.extend([math.log2(alphabet)] * block.length)
        c1.extend([math.log2(codewords) / block.length] * block.length)
    return c0, c1


def information_rate(oracle: FactorOracle, parse: CompressionParse) -> IRProfile:
    parse.validate(oracle.num_frames)
    c0, c1 = _coding_costs(parse.blocks)
    per_frame = [max(0.0, a - b) for a, b in zip(c0, c1)]
    return IRProfile(per_frame, oracle.theta, c0, c1, parse)


def ir_at(frames, theta: float, dist: np.ndarray | None = None) -> IRProfile:
    oracle = build_oracle(frames, theta, dist)
    return information_rate(oracle, compror_encode(oracle))


# ---------------------------------------------------------------------------
# Threshold search
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    theta_star: float
    best: IRProfile
    curve: list[tuple[float, float]]

    def to_dict(self) -> dict:
        return {
            "theta_star": self.theta_star,
            "total": self.best.total,
            "curve": [[t, v] for t, v in self.curve],
            "per_frame": list(self.best.per_frame),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "total_ir"])
        w.writerows([repr(t), repr(v)] for t, v in self.curve)
        return buf.getvalue()


def _as_frames(frames) -> np.ndarray:
    return frames.frames if isinstance(frames, ChromaSequence) else np.asarray(frames, dtype=float)


def sweep_threshold(frames, thetas: Sequence[float] | None = None) -> SweepResult:
    """Evaluate total IR at every candidate threshold; keep the first maximum.

    Only the repeat structure is needed per candidate, so forward transitions
    are built once, for the winning threshold.
    """
    x = _as_frames(frames)
    if len(x) < 2:
        raise TooShort(f"need at least 2 frames, got {len(x)}")
    if thetas is None:
        thetas = candidate_thresholds(x)
    dist = distance_matrix(x)
    skewed = skew(dist)
    curve: list[tuple[float, float]] = []
    best_theta, best_total = None, -math.inf
    for theta in thetas:
        c0, c1 = _coding_costs(_greedy_blocks(*repeated_suffixes(skewed, theta)))
        total = math.fsum(max(0.0, a - b) for a, b in zip(c0, c1))
        curve.append((theta, total))
        if total > best_total:
            best_theta, best_total = theta, total
    return SweepResult(best_theta, ir_at(x, best_theta, dist), curve)


def total_ir(frames) -> float:
    return sweep_threshold(frames).best.total


# ---------------------------------------------------------------------------
# Motifs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pattern:
    length: int
    occurrences: tuple[int, ...]  # end-frame indices, ascending


@dataclass
class MotifSet:
    patterns: list[Pattern]
    theta: float = 0.0

    def __len__(self) -> int:
        return len(self.patterns)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "patterns": [{"length": p.length, "occurrences": list(p.occurrences)} for p in self.patterns],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def rows(self) -> list[tuple[int, int, int]]:
        """``(pattern_index, occurrence_end_frame, length)`` triples for plotting."""
        return [(k, end, p.length) for k, p in enumerate(self.patterns) for end in p.occurrences]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pattern_index", "occurrence_end_frame", "length"])
        w.writerows(self.rows())
        return buf.getvalue()


def _verified_length(oracle: FactorOracle, dist: np.ndarray, a: int, b: int, limit: int) -> int:
    """How many frames ending at ``a`` and ``b`` really sit within theta, up to ``limit``."""
    n = 0
    while n < limit and a - n >= 0 and b - n >= 0 and dist[a - n, b - n] <= oracle.theta + DEDUP_TOL:
        n += 1
    return n


def find_motifs(oracle: FactorOracle, min_len: int = 4) -> MotifSet:
    """Merge suffix-link witnesses ``(i, sfx[i])`` with long enough repeats into patterns.

    Each witness is re-checked against the frames, so at theta > 0 a pair
    only counts for as many trailing frames as truly lie within theta.
    """
    if min_len < 1:
        raise ValueError(f"min_len must be >= 1, got {min_len}")
    dist = distance_matrix(oracle.frames)
    parent = list(range(oracle.num_states))

    def find(s: int) -> int:
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    edges = []
    for i in range(1, oracle.num_states):
        j = oracle.sfx[i]
        if j < 1 or oracle.lrs[i] < min_len:
            continue
        seg = _verified_length(oracle, dist, oracle.data(i), oracle.data(j), oracle.lrs[i])
        if seg >= min_len:
            edges.append((i, j, seg))
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    members: dict[int, set[int]] = {}
    shortest: dict[int, int] = {}
    for i, j, seg in edges:
        root = find(i)
        members.setdefault(root, set()).update((i, j))
        shortest[root] = min(shortest.get(root, seg), seg)
    patterns = [
        Pattern(shortest[root], tuple(sorted(oracle.data(s) for s in states)))
        for root, states in members.items()
    ]
    patterns.sort(key=lambda p: (p.occurrences[0], p.length))
    return MotifSet(patterns, oracle.theta)
