import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bruteforce import factors, ir_from_blocks, min_block_parse, one_hot, prefix_repeats, restricted_growth_strings
from oracular.features import TooShort, candidate_thresholds
from oracular.oracle import (
    Block,
    CompressionParse,
    EmptySequence,
    ParseMismatch,
    build_oracle,
    compror_encode,
    find_motifs,
    information_rate,
    ir_at,
    sweep_threshold,
)

symbols = st.text(alphabet="abc", min_size=1, max_size=14)


def spells(oracle, text, s):
    state = 0
    for ch in s:
        nxt = [t for t in oracle.trn[state] if text[t - 1] == ch]
        if len(nxt) != 1:
            return False
        state = nxt[0]
    return True


def decode(parse, text):
    out = []
    for b in parse.blocks:
        if b.is_copy:
            for k in range(b.length):
                out.append(out[b.pointer + k])
        else:
            out.append(text[b.start])
    return "".join(out)


def test_aabb_suffix_links():
    o = build_oracle(one_hot("aabb"), 0.0)
    assert o.sfx == [-1, 0, 1, 0, 3]
    assert o.lrs == [0, 0, 1, 0, 1]


def test_abab_parse():
    parse = compror_encode(build_oracle(one_hot("abab"), 0.0))
    assert parse.blocks == [Block(0, 1), Block(1, 1), Block(2, 2, 0)]


def test_constant_sequence_parse_and_motif():
    o = build_oracle(np.tile(np.eye(12)[0], (8, 1)), 0.0)
    assert compror_encode(o).blocks == [Block(0, 1), Block(1, 7, 0)]
    motifs = find_motifs(o, min_len=4)
    assert len(motifs) == 1
    assert len(motifs.patterns[0].occurrences) >= 4


def test_period_four_motifs():
    o = build_oracle(one_hot("abcd" * 8), 0.0)
    motifs = find_motifs(o, min_len=4)
    assert any(p.length >= 4 and len(p.occurrences) >= 6 for p in motifs.patterns)


def test_all_distinct_has_no_motifs():
    o = build_oracle(np.eye(12), 0.0)
    assert len(find_motifs(o, 1)) == 0
    assert all(not b.is_copy for b in compror_encode(o).blocks)


@pytest.mark.parametrize("length", range(1, 9))
def test_exhaustive_short_strings(length):
    for s in restricted_growth_strings(length, "abc"):
        o = build_oracle(one_hot(s), 0.0)
        lrs, sfx = prefix_repeats(s)
        assert o.lrs == lrs, s
        assert o.sfx == sfx, s
        for f in factors(s):
            assert spells(o, s, f), (s, f)


@settings(max_examples=200, deadline=None)
@given(symbols)
def test_parse_is_lossless_and_minimal(s):
    parse = compror_encode(build_oracle(one_hot(s), 0.0))
    parse.validate(len(s))
    assert decode(parse, s) == s
    # longest-previous-factor greedy parsing uses the fewest blocks
    assert len(parse.blocks) == min_block_parse(s)


@settings(max_examples=200, deadline=None)
@given(symbols)
def test_ir_matches_arithmetic_oracle(s):
    o = build_oracle(one_hot(s), 0.0)
    parse = compror_encode(o)
    profile = information_rate(o, parse)
    expected = ir_from_blocks([(b.length, b.is_copy) for b in parse.blocks])
    assert profile.per_frame == pytest.approx(expected, abs=1e-12)
    assert all(v >= 0 for v in profile.per_frame)


def test_ir_zero_when_nothing_repeats():
    assert ir_at(np.eye(12), 0.0).total == 0.0


def test_ir_zero_when_everything_merges():
    x = np.random.default_rng(0).random((20, 12))
    assert ir_at(x, 10.0).total == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_lrs_monotone_in_theta(seed):
    x = np.random.default_rng(seed).random((25, 12))
    thetas = candidate_thresholds(x)[::40]
    previous = None
    for theta in thetas:
        lrs = build_oracle(x, theta).lrs
        if previous is not None:
            assert all(a >= b for a, b in zip(lrs, previous))
        previous = lrs


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_sweep_is_argmax_of_exhaustive_evaluation(seed):
    x = np.random.default_rng(seed).random((30, 12))
    result = sweep_threshold(x)
    totals = [ir_at(x, t).total for t in candidate_thresholds(x)]
    assert result.best.total == pytest.approx(max(totals), abs=1e-9)
    first = totals.index(max(totals))
    assert result.theta_star == candidate_thresholds(x)[first]
    assert [v for _, v in result.curve] == pytest.approx(totals, abs=1e-9)


def test_sweep_deterministic():
    x = np.random.default_rng(5).random((40, 12))
    assert sweep_threshold(x).to_json() == sweep_threshold(x).to_json()


def test_sweep_too_short():
    with pytest.raises(TooShort):
        sweep_threshold(np.eye(12)[:1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.3, 0.6, 0.9]))
def test_motif_occurrences_are_genuine_repeats(seed, theta):
    rng = np.random.default_rng(seed)
    base = rng.random((6, 12))
    x = np.concatenate([base + 0.05 * rng.standard_normal(base.shape) for _ in range(4)])
    o = build_oracle(x, theta)
    for p in find_motifs(o, 3).patterns:
        assert p.length >= 3
        assert len(p.occurrences) >= 2
        for end in p.occurrences:
            assert end - p.length + 1 >= 0
        # every occurrence is linked to some other within theta over the full length
        for a in p.occurrences:
            linked = any(
                all(np.linalg.norm(x[a - k] - x[b - k]) <= theta + 1e-12 for k in range(p.length))
                for b in p.occurrences if b != a
            )
            assert linked


def test_motif_rows_and_csv():
    motifs = find_motifs(build_oracle(one_hot("abcd" * 4), 0.0), 4)
    rows = motifs.rows()
    assert rows and all(length >= 4 for _, _, length in rows)
    assert motifs.to_csv().splitlines()[0] == "pattern_index,occurrence_end_frame,length"


def test_nearest_transition_wins():
    x = np.array([[0.0], [1.0], [0.0], [0.9]])
    o = build_oracle(x, 0.5)
    assert o.step(0, np.array([0.95])) == 2
    assert o.step(0, np.array([5.0])) is None
    assert o.accepts(x)


def test_parse_validation():
    with pytest.raises(ParseMismatch):
        CompressionParse([Block(0, 1), Block(2, 1)]).validate(3)
    with pytest.raises(ParseMismatch):
        CompressionParse([Block(0, 1), Block(1, 1, 1)]).validate(2)
    with pytest.raises(ParseMismatch):
        CompressionParse([Block(0, 2)]).validate(2)


def test_empty_and_negative_theta():
    with pytest.raises(EmptySequence):
        build_oracle(np.zeros((0, 12)), 0.0)
    with pytest.raises(ValueError):
        build_oracle(np.eye(12), -1.0)


def test_ir_profile_totals():
    profile = ir_at(one_hot("abab"), 0.0)
    assert profile.total == pytest.approx(math.fsum(profile.per_frame))
    assert profile.to_json() == ir_at(one_hot("abab"), 0.0).to_json()
