import math
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import HASH, T0, corpus_from, random_corpus, random_descriptor
from oracles import euclid, novelty_oracle
from remixscape.corpus import DesignRecord
from remixscape.descriptor import MATCHED, DescriptorConfig, describe
from remixscape.errors import IncompatibleDescriptors, MissingDescriptor, UnknownDesign
from remixscape.similarity import (
    ALL, NO_PREDECESSOR, PREDECESSORS, DistanceMatrix, distance, distance_matrix, k_nearest,
    novelty, novelty_csv, novelty_report,
)
from remixscape.synth import benchmark_shapes, moved


# ---------------------------------------------------------------------------
# distance


def test_distance_identity_and_symmetry():
    rng = np.random.default_rng(0)
    for mode_kw in ({}, {"mode": MATCHED, "n_components": 3}):
        for _ in range(50):
            a, b = random_descriptor(rng, **mode_kw), random_descriptor(rng, **mode_kw)
            assert distance(a, a) == 0
            assert distance(a, b) == distance(b, a)
            assert distance(a, b) >= 0


def test_joint_distance_is_euclidean():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = random_descriptor(rng), random_descriptor(rng)
        assert math.isclose(distance(a, b), euclid(a.joint.energies, b.joint.energies),
                            rel_tol=1e-12)


def test_triangle_inequality_joint():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, b, c = (random_descriptor(rng) for _ in range(3))
        assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12


@settings(max_examples=100)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_component_matched_symmetric(na, nb, seed):
    rng = np.random.default_rng(seed)
    a = random_descriptor(rng, mode=MATCHED, n_components=na)
    b = random_descriptor(rng, mode=MATCHED, n_components=nb)
    assert distance(a, b) == distance(b, a)


def test_component_matched_by_hand():
    from remixscape.descriptor import DesignDescriptor, ShapeDescriptor

    def sd(*v):
        return ShapeDescriptor(np.array([v], float), HASH)

    a = DesignDescriptor(sd(0, 0), (sd(1, 0), sd(5, 0)), MATCHED)
    b = DesignDescriptor(sd(0, 0), (sd(4, 0),), MATCHED)
    # greedy: (5,0)-(4,0) at 1 first; (1,0) unmatched with norm 1
    assert distance(a, b) == 1.0 + 1.0


def test_incompatible():
    rng = np.random.default_rng(3)
    a = random_descriptor(rng)
    with pytest.raises(IncompatibleDescriptors):
        distance(a, random_descriptor(rng, params_hash="cd" * 32))
    with pytest.raises(IncompatibleDescriptors):
        distance(a, random_descriptor(rng, mode=MATCHED))


# ---------------------------------------------------------------------------
# novelty


@pytest.mark.parametrize("seed", range(10))
def test_novelty_equals_oracle(seed):
    rng = np.random.default_rng(seed)
    c = random_corpus(rng, int(rng.integers(10, 31)))
    for i in c.ids():
        score = novelty(c, i)
        ref = novelty_oracle(c, i)
        if ref is None:
            assert score.value is NO_PREDECESSOR
            assert score.nearest_id is None
        else:
            assert score.value == ref[0]
            assert score.nearest_id == ref[2]
            assert c.record(score.nearest_id).timestamp < c.record(i).timestamp
        assert score.computed_under == HASH


def test_earliest_has_no_predecessor():
    rng = np.random.default_rng(4)
    recs = [DesignRecord(f"d{i}", T0 + timedelta(days=i)) for i in range(3)]
    c = corpus_from(recs, [random_descriptor(rng) for _ in recs])
    assert novelty(c, "d0").value is NO_PREDECESSOR
    assert not novelty(c, "d0").has_predecessor


def test_same_timestamp_invisible():
    rng = np.random.default_rng(5)
    d = random_descriptor(rng)
    recs = [DesignRecord("a", T0), DesignRecord("b", T0)]
    c = corpus_from(recs, [d, d])
    assert novelty(c, "b").value is NO_PREDECESSOR


def test_duplicate_is_zero():
    rng = np.random.default_rng(6)
    d, e = random_descriptor(rng), random_descriptor(rng)
    recs = [DesignRecord(i, T0 + timedelta(hours=k)) for k, i in enumerate("abc")]
    c = corpus_from(recs, [d, e, d])
    s = novelty(c, "c")
    assert s.value == 0.0 and s.nearest_id == "a"


def test_tie_broken_by_time_then_id():
    d = random_descriptor(np.random.default_rng(7))
    recs = [DesignRecord("b", T0), DesignRecord("a", T0), DesignRecord("z", T0 - timedelta(1)),
            DesignRecord("q", T0 + timedelta(1))]
    c = corpus_from(recs, [d] * 4)
    assert novelty(c, "q").nearest_id == "z"
    c = corpus_from(recs[:2] + recs[3:], [d] * 3)
    assert novelty(c, "q").nearest_id == "a"


def test_later_design_does_not_change_novelty():
    rng = np.random.default_rng(8)
    c = random_corpus(rng, 15)
    before = {i: novelty(c, i) for i in c.ids()}
    last = max(r.timestamp for r in c.records)
    recs = c.records + [DesignRecord("late", last + timedelta(days=1))]
    c2 = corpus_from(recs, [c.descriptor(i) for i in c.ids()] + [random_descriptor(rng)])
    assert {i: novelty(c2, i) for i in c.ids()} == before


def test_unknown_and_missing():
    rng = np.random.default_rng(9)
    recs = [DesignRecord("a", T0), DesignRecord("b", T0 + timedelta(1))]
    c = corpus_from(recs, [random_descriptor(rng), None])
    with pytest.raises(UnknownDesign):
        novelty(c, "nope")
    with pytest.raises(MissingDescriptor):
        novelty(c, "b")
    assert [s.design_id for s in novelty_report(c)] == ["a"]


def test_novelty_csv():
    rng = np.random.default_rng(10)
    recs = [DesignRecord(f"d{i}", T0 + timedelta(hours=i)) for i in range(3)]
    c = corpus_from(recs, [random_descriptor(rng) for _ in recs])
    text = novelty_csv(novelty_report(c), c)
    lines = text.splitlines()
    assert lines[0] == "id,timestamp,novelty,nearest_id"
    assert len(lines) == 4
    assert lines[1] == "d0,2013-05-01T00:00:00Z,NA,"
    assert float(lines[2].split(",")[2]) == novelty(c, "d1").value


def test_novelty_ranks_survive_common_scale():
    shapes = list(benchmark_shapes().values())
    recs = [DesignRecord(f"s{i}", T0 + timedelta(hours=i)) for i in range(len(shapes))]
    cfg = DescriptorConfig()
    base = corpus_from(recs, [describe(m, cfg) for m in shapes])
    big = corpus_from(recs, [describe(moved(m, scale=3.0), cfg) for m in shapes])

    def ranks(c):
        vals = [novelty(c, r.id).value for r in recs[1:]]
        return list(np.argsort(vals))

    assert ranks(base) == ranks(big)


# ---------------------------------------------------------------------------
# neighbours and matrices


@pytest.mark.parametrize("seed", range(3))
def test_k_nearest_matches_sort(seed):
    rng = np.random.default_rng(100 + seed)
    c = random_corpus(rng, 30)
    for i in c.ids()[:10]:
        me = c.record(i)
        everyone = sorted(
            (distance(c.descriptor(i), c.descriptor(o.id)), o.timestamp, o.id)
            for o in c.records if o.id != i
        )
        full = k_nearest(c, i, 100, ALL)
        assert [x[0] for x in full] == [e[2] for e in everyone]
        preds = [e for e in everyone if e[1] < me.timestamp]
        got = k_nearest(c, i, 3, PREDECESSORS)
        assert [x[0] for x in got] == [e[2] for e in preds[:3]]
        one = k_nearest(c, i, 1)
        s = novelty(c, i)
        assert one == ([] if not s.has_predecessor else [(s.nearest_id, s.value)])


def test_k_nearest_errors():
    c = random_corpus(np.random.default_rng(11), 5)
    with pytest.raises(UnknownDesign):
        k_nearest(c, "nope", 1)
    with pytest.raises(ValueError):
        k_nearest(c, c.ids()[0], 0)


def test_distance_matrix_recompute():
    rng = np.random.default_rng(12)
    c = random_corpus(rng, 20)
    dm = distance_matrix(c)
    assert dm.ids == tuple(c.ids())
    for a, i in enumerate(dm.ids):
        for b, j in enumerate(dm.ids):
            assert dm.values[a, b] == distance(c.descriptor(i), c.descriptor(j))
    assert np.array_equal(dm.values, dm.values.T)
    assert np.all(np.diag(dm.values) == 0)
    # novelty is the column minimum over strict predecessors
    for a, i in enumerate(dm.ids):
        t = c.record(i).timestamp
        col = [dm.values[a, b] for b, j in enumerate(dm.ids) if c.record(j).timestamp < t]
        s = novelty(c, i)
        assert (not col and not s.has_predecessor) or s.value == min(col)


def test_distance_matrix_small_cases():
    rng = np.random.default_rng(13)
    d = random_descriptor(rng)
    recs = [DesignRecord("a", T0), DesignRecord("b", T0), DesignRecord("c", T0)]
    c = corpus_from(recs, [d, d, None])
    assert distance_matrix(c, ["a"]).values.tolist() == [[0.0]]
    assert distance_matrix(c, ["a", "b"]).values[0, 1] == 0
    with pytest.raises(MissingDescriptor) as exc:
        distance_matrix(c)
    assert exc.value.ids == ["c"]


def test_distance_matrix_csv():
    dm = DistanceMatrix(["a", "b"], [[0, 1.5], [1.5, 0]])
    assert dm.to_csv() == "id,a,b\na,0.0,1.5\nb,1.5,0.0\n"
