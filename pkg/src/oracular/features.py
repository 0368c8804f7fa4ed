"""Symbolic chroma features and the frame distance the oracle thresholds on."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .midi_io import PianoRoll

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
DEDUP_TOL = 1e-12


class TooShort(ValueError):
    pass


@dataclass
class ChromaSequence:
    """Rows are unit-L2 (or all-zero, for silence) 12-bin pitch-class vectors."""

    frames: np.ndarray
    hop: int = 1

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 2 or self.frames.shape[1] != 12:
            raise ValueError(f"chroma frames must be (N, 12), got {self.frames.shape}")
        if len(self.frames) < 1:
            raise ValueError("chroma sequence must hold at least one frame")

    def __len__(self) -> int:
        return len(self.frames)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(PITCH_CLASSES)
        for row in self.frames:
            writer.writerow(f"{v:.9g}" for v in row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, hop: int = 1) -> ChromaSequence:
        rows = list(csv.reader(io.StringIO(text)))
        return cls(np.array([[float(v) for v in r] for r in rows[1:]]), hop)


def normalize(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    norms = np.linalg.norm(values, axis=-1, keepdims=True)
    return np.divide(values, norms, out=np.zeros_like(values), where=norms > 0)


def chroma_from_piano_roll(roll: PianoRoll, hop: int = 1) -> ChromaSequence:
    """Count active cells per pitch class in each window of ``hop`` steps."""
    if hop < 1:
        raise ValueError(f"hop must be >= 1, got {hop}")
    num_frames = -(-roll.num_steps // hop)
    padded = np.zeros((num_frames * hop, 128))
    padded[: roll.num_steps] = roll.grid
    # fold 128 pitches onto 12 classes (pitch 0 is C)
    folded = np.zeros((num_frames * hop, 132))
    folded[:, :128] = padded
    per_step = folded.reshape(-1, 11, 12).sum(axis=1)
    counts = per_step.reshape(num_frames, hop, 12).sum(axis=1)
    return ChromaSequence(normalize(counts), hop)


def frame_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def distance_matrix(frames: np.ndarray) -> np.ndarray:
    """All pairwise Euclidean distances, exactly symmetric with a zero diagonal."""
    x = np.asarray(frames, dtype=float)
    if len(x) < 2:
        return np.zeros((len(x), len(x)))
    return squareform(pdist(x))


def unique_sorted(values: np.ndarray, tol: float = DEDUP_TOL) -> list[float]:
    out: list[float] = []
    for v in np.sort(np.asarray(values, dtype=float).ravel()):
        if not out or v - out[-1] > tol:
            out.append(float(v))
    return out


def candidate_thresholds(seq: ChromaSequence | np.ndarray) -> list[float]:
    frames = seq.frames if isinstance(seq, ChromaSequence) else np.asarray(seq, dtype=float)
    if len(frames) < 2:
        raise TooShort(f"need at least 2 frames, got {len(frames)}")
    return unique_sorted(np.concatenate(([0.0], pdist(frames))))
