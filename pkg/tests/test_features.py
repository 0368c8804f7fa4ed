import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracular.features import (
    ChromaSequence,
    TooShort,
    candidate_thresholds,
    chroma_from_piano_roll,
    distance_matrix,
    frame_distance,
    unique_sorted,
)
from oracular.midi_io import PianoRoll


def loop_chroma(grid, hop):
    """Pitch-class histogram per window by explicit loops, then unit length."""
    steps = grid.shape[0]
    out = []
    for start in range(0, steps, hop):
        counts = [0.0] * 12
        for t in range(start, min(start + hop, steps)):
            for pitch in range(128):
                if grid[t, pitch]:
                    counts[pitch % 12] += 1
        norm = math.sqrt(sum(c * c for c in counts))
        out.append([c / norm if norm else 0.0 for c in counts])
    return np.array(out)


def test_c_major_triad():
    grid = np.zeros((1, 128), np.uint8)
    grid[0, [60, 64, 67]] = 1
    chroma = chroma_from_piano_roll(PianoRoll(grid)).frames[0]
    expected = np.zeros(12)
    expected[[0, 4, 7]] = 1 / math.sqrt(3)
    assert np.allclose(chroma, expected, atol=1e-15)


def test_octaves_fold():
    grid = np.zeros((1, 128), np.uint8)
    grid[0, [0, 12, 120]] = 1
    assert chroma_from_piano_roll(PianoRoll(grid)).frames[0].tolist() == [1.0] + [0.0] * 11


def test_silence_is_zero_vector():
    grid = np.zeros((3, 128), np.uint8)
    grid[1, 61] = 1
    chroma = chroma_from_piano_roll(PianoRoll(grid)).frames
    assert not chroma[0].any() and not chroma[2].any()
    assert chroma[1, 1] == 1.0


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.just(128)), elements=st.integers(0, 1)),
       st.integers(1, 5))
def test_matches_loop_oracle(grid, hop):
    chroma = chroma_from_piano_roll(PianoRoll(grid), hop)
    assert len(chroma) == -(-grid.shape[0] // hop)
    assert np.allclose(chroma.frames, loop_chroma(grid, hop), atol=1e-12)


def test_hop_geometry():
    roll = PianoRoll(np.ones((256, 128), np.uint8))
    assert len(chroma_from_piano_roll(roll, 1)) == 256
    assert len(chroma_from_piano_roll(roll, 4)) == 64
    with pytest.raises(ValueError):
        chroma_from_piano_roll(roll, 0)


def test_distance_matrix_properties():
    x = np.random.default_rng(0).random((9, 12))
    d = distance_matrix(x)
    assert np.array_equal(d, d.T)
    assert not np.diag(d).any()
    for i in range(9):
        for j in range(9):
            assert d[i, j] == pytest.approx(frame_distance(x[i], x[j]), abs=1e-12)


def test_orthogonal_unit_frames_are_sqrt2_apart():
    assert frame_distance(np.eye(12)[0], np.eye(12)[5]) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_candidate_thresholds():
    x = np.eye(12)[[0, 1, 0, 1]]
    assert candidate_thresholds(ChromaSequence(x)) == [0.0, pytest.approx(math.sqrt(2))]
    with pytest.raises(TooShort):
        candidate_thresholds(x[:1])


def test_unique_sorted_merges_within_tolerance():
    assert unique_sorted(np.array([1.0, 1.0 + 1e-13, 0.5, 1.1])) == [0.5, 1.0, 1.1]


def test_csv_roundtrip():
    grid = (np.random.default_rng(3).random((10, 128)) < 0.1).astype(np.uint8)
    chroma = chroma_from_piano_roll(PianoRoll(grid), 2)
    text = chroma.to_csv()
    assert text.splitlines()[0] == "C,C#,D,D#,E,F,F#,G,G#,A,A#,B"
    back = ChromaSequence.from_csv(text, 2)
    assert np.allclose(back.frames, chroma.frames, atol=1e-9)


def test_chroma_shape_validation():
    with pytest.raises(ValueError):
        ChromaSequence(np.zeros((3, 11)))
