import json
import math
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import T0
from oracles import dm_of, pairwise, random_dissimilarities, stress_loop
from remixscape.corpus import Corpus, DesignRecord
from remixscape.errors import NotSymmetric, ProjectionDegenerate, UnknownDesign
from remixscape.landscape import (
    SMACOF, classical_mds, emit_landscape, landscape_csv, normalized_stress, sidecar_json,
    smacof_refine,
)
from remixscape.similarity import DistanceMatrix


TETRA = np.ones((4, 4)) - np.eye(4)


def test_equilateral():
    d = np.ones((3, 3)) - np.eye(3)
    e = classical_mds(dm_of(d))
    assert np.abs(pairwise(e.points) - d).max() <= 1e-9
    assert e.stress <= 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_recovers_planar_points(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(scale=rng.uniform(0.1, 100), size=(int(rng.integers(3, 40)), 2))
    d = pairwise(pts)
    e = classical_mds(dm_of(d))
    scale = d.max()
    assert np.abs(pairwise(e.points) - d).max() <= 1e-6 * max(1.0, scale)
    assert np.abs(e.points.mean(axis=0)).max() <= 1e-9 * max(1.0, scale)


def test_tetrahedron():
    e = classical_mds(dm_of(TETRA))
    assert e.stress > 0
    assert abs(e.eigenvalues[0] - e.eigenvalues[1]) <= 1e-9
    # independent oracle: eigenvalues of -1/2 J D^2 J for the regular simplex
    j = np.eye(4) - 0.25
    evals = np.sort(np.linalg.eigvalsh(-0.5 * j @ TETRA ** 2 @ j))[::-1]
    assert np.allclose(e.eigenvalues, evals[:2], atol=1e-12)
    assert math.isclose(e.eigenvalues[0], 0.5, rel_tol=1e-12)
    refined = smacof_refine(dm_of(TETRA), e)
    assert refined.stress <= e.stress
    assert refined.method == SMACOF


def test_stress_matches_loop():
    rng = np.random.default_rng(3)
    d = pairwise(rng.normal(size=(12, 5)))
    e = classical_mds(dm_of(d))
    assert math.isclose(e.stress, stress_loop(d, e.points), rel_tol=1e-12)
    assert 0 <= e.stress <= 1


def test_sign_convention():
    rng = np.random.default_rng(4)
    e = classical_mds(dm_of(pairwise(rng.normal(size=(9, 3)))))
    for k in range(2):
        col = e.points[:, k]
        assert col[np.argmax(np.abs(col))] > 0
    assert e.eigenvalues[0] >= e.eigenvalues[1]


@pytest.mark.parametrize("seed", range(5))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    d = pairwise(rng.normal(size=(10, 4)))
    perm = rng.permutation(10)
    a = classical_mds(dm_of(d))
    b = classical_mds(dm_of(d[np.ix_(perm, perm)]))
    assert np.abs(b.points - a.points[perm]).max() <= 1e-9


def test_errors():
    with pytest.raises(ProjectionDegenerate):
        classical_mds(dm_of(np.zeros((2, 2))))
    bad = TETRA.copy()
    bad[0, 1] = 2
    with pytest.raises(NotSymmetric):
        classical_mds(dm_of(bad))
    diag = TETRA + np.eye(4)
    with pytest.raises(NotSymmetric):
        classical_mds(dm_of(diag))


def test_non_euclidean_single_positive_eigenvalue():
    # the centering null vector keeps the second eigenvalue at 0 (up to
    # rounding), so a strongly non-metric input embeds on a line
    d = np.array([[0, 1, 10], [1, 0, 1], [10, 1, 0]], float)
    e = classical_mds(dm_of(d))
    assert e.eigenvalues[1] == 0
    assert np.all(e.points[:, 1] == 0)


def test_collinear_points():
    x = np.array([0.0, 1.0, 3.5, 7.0])
    d = np.abs(x[:, None] - x[None])
    e = classical_mds(dm_of(d))
    assert np.abs(pairwise(e.points) - d).max() <= 1e-9


def test_smacof_fixed_point():
    rng = np.random.default_rng(5)
    d = pairwise(rng.normal(size=(8, 2)))
    e = classical_mds(dm_of(d))
    r = smacof_refine(dm_of(d), e)
    assert r.iterations <= 1
    assert r.stress <= e.stress + 1e-15


@pytest.mark.parametrize("seed", range(10))
def test_smacof_monotone(seed):
    rng = np.random.default_rng(seed)
    d = random_dissimilarities(rng, 15)
    try:
        init = classical_mds(dm_of(d))
    except ProjectionDegenerate:
        pytest.skip("no classical start")
    r = smacof_refine(dm_of(d), init, max_iter=300)
    h = r.stress_history
    assert len(h) == r.iterations + 1
    assert all(b <= a + 1e-15 for a, b in zip(h, h[1:]))
    assert r.stress <= init.stress
    assert math.isclose(r.stress, stress_loop(d, r.points), rel_tol=1e-9)
    assert np.abs(r.points.mean(axis=0)).max() <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 12), st.integers(0, 2 ** 32 - 1))
def test_smacof_monotone_property(n, seed):
    d = random_dissimilarities(np.random.default_rng(seed), n)
    try:
        init = classical_mds(dm_of(d))
    except ProjectionDegenerate:
        return
    h = smacof_refine(dm_of(d), init).stress_history
    assert all(b <= a + 1e-15 for a, b in zip(h, h[1:]))


def test_normalized_stress_zero_distances():
    assert normalized_stress(np.zeros((3, 3)), np.zeros((3, 2))) == 0.0


# ---------------------------------------------------------------------------
# landscape table


def corpus_with(pops):
    return Corpus([DesignRecord(f"d{i}", T0 + timedelta(hours=i), (), p) for i, p in enumerate(pops)])


def test_emit_landscape():
    c = corpus_with([0, 7, 41])
    d = np.ones((3, 3)) - np.eye(3)
    # embed in reverse order; rows still come out in manifest order
    e = classical_mds(DistanceMatrix(["d2", "d1", "d0"], d))
    rows = emit_landscape(e, c, "log1p")
    assert [r.id for r in rows] == ["d0", "d1", "d2"]
    assert rows[0].z == 0
    assert rows[2].z == math.log1p(41)
    assert (rows[2].x, rows[2].y) == tuple(e.points[0])
    raw = emit_landscape(e, c, "raw")
    assert [r.z for r in raw] == [0, 7, 41]


def test_emit_unknown():
    c = corpus_with([1, 2])
    e = classical_mds(dm_of(np.ones((3, 3)) - np.eye(3), ["d0", "d1", "zz"]))
    with pytest.raises(UnknownDesign):
        emit_landscape(e, c)


def test_csv_and_sidecar():
    c = corpus_with([0, 1, 2])
    e = classical_mds(dm_of(np.ones((3, 3)) - np.eye(3), ["d0", "d1", "d2"]))
    text = landscape_csv(emit_landscape(e, c, "raw"))
    lines = text.splitlines()
    assert lines[0] == "id,x,y,z"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["d0", "d1", "d2"]
    assert float(lines[2].split(",")[3]) == 1.0
    meta = json.loads(sidecar_json(e, "raw"))
    assert meta["method"] == "classical"
    assert meta["z_transform"] == "raw"
    assert len(meta["eigenvalues"]) == 2
    assert meta["stress"] == e.stress
