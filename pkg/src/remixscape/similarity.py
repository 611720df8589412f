"""Descriptor distances, nearest neighbours and temporal novelty."""
from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass

import numpy as np

from .descriptor import JOINT, DesignDescriptor
from .errors import IncompatibleDescriptors, MissingDescriptor

log = logging.getLogger(__name__)

PREDECESSORS = "predecessors-only"
ALL = "all"


class Marker(enum.Enum):
    NO_PREDECESSOR = "no-predecessor"

    def __repr__(self):
        return self.value


NO_PREDECESSOR = Marker.NO_PREDECESSOR


@dataclass(frozen=True)
class NoveltyScore:
    design_id: str
    value: float | Marker
    nearest_id: str | None
    computed_under: str

    @property
    def has_predecessor(self) -> bool:
        return self.value is not NO_PREDECESSOR


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (len(self.ids), len(self.ids)):
            raise ValueError("values must be len(ids) x len(ids)")
        object.__setattr__(self, "values", v)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["id", *self.ids])
        for i, row in zip(self.ids, self.values.tolist()):
            w.writerow([i, *map(repr, row)])
        return out.getvalue()


def _norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.sum(x * x)))


def _canonical_key(d: DesignDescriptor):
    return (len(d.per_component), b"".join(sd.energies.tobytes() for sd in d.per_component))


def component_matched_distance(a: DesignDescriptor, b: DesignDescriptor) -> float:
    """Greedy pairing of components by ascending distance.

    Mean distance over matched pairs, plus the norm of every unmatched
    component.  Greedy rather than optimal assignment, so the result is an
    approximation and need not satisfy the triangle inequality.
    """
    if _canonical_key(b) < _canonical_key(a):
        a, b = b, a  # exact symmetry, including tie-breaking
    ea = [sd.energies for sd in a.per_component]
    eb = [sd.energies for sd in b.per_component]
    pairs = sorted((_norm(x - y), i, j) for i, x in enumerate(ea) for j, y in enumerate(eb))
    used_a, used_b, matched = set(), set(), []
    for d, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matched.append(d)
    penalty = sum(_norm(x) for i, x in enumerate(ea) if i not in used_a)
    penalty += sum(_norm(y) for j, y in enumerate(eb) if j not in used_b)
    return float(np.mean(matched)) + penalty


def distance(a: DesignDescriptor, b: DesignDescriptor) -> float:
    if a.params_hash != b.params_hash or a.mode != b.mode:
        raise IncompatibleDescriptors("descriptors were computed under different parameters")
    if a.mode == JOINT:
        return _norm(a.joint.energies - b.joint.energies)
    return component_matched_distance(a, b)


# ---------------------------------------------------------------------------
# corpus queries


def _order_key(corpus, design_id):
    rec = corpus.record(design_id)
    return (rec.timestamp, rec.id)


def _candidates(corpus, design_id, temporal_filter, among):
    target = corpus.record(design_id)
    pool = corpus.ids() if among is None else list(among)
    out = []
    for other in pool:
        rec = corpus.record(other)
        if other == design_id:
            continue
        if temporal_filter == PREDECESSORS and not rec.timestamp < target.timestamp:
            continue
        if not corpus.has_descriptor(other):
            continue
        out.append(other)
    return out


def _ranked(corpus, design_id, candidates):
    d = corpus.descriptor(design_id)
    scored = [(distance(d, corpus.descriptor(o)), *_order_key(corpus, o)) for o in candidates]
    scored.sort()
    return [(rid, dist) for dist, _, rid in scored]


def novelty(corpus, design_id: str, among=None) -> NoveltyScore:
    """Distance to the closest design with a strictly earlier timestamp.

    Ties go to the earlier design, then the smaller id.  ``among``
    optionally restricts the candidate pool (e.g. to one category).
    """
    desc = corpus.descriptor(design_id)
    ranked = _ranked(corpus, design_id, _candidates(corpus, design_id, PREDECESSORS, among))
    if not ranked:
        return NoveltyScore(design_id, NO_PREDECESSOR, None, desc.params_hash)
    nearest, value = ranked[0]
    return NoveltyScore(design_id, value, nearest, desc.params_hash)


def novelty_report(corpus, among=None) -> list[NoveltyScore]:
    """Novelty of every design that has a descriptor, in manifest order."""
    return [novelty(corpus, i, among) for i in corpus.ids() if corpus.has_descriptor(i)]


def k_nearest(corpus, design_id: str, k: int, temporal_filter: str = PREDECESSORS,
              among=None) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if temporal_filter not in (PREDECESSORS, ALL):
        raise ValueError(f"temporal_filter must be {PREDECESSORS!r} or {ALL!r}")
    corpus.record(design_id)
    ranked = _ranked(corpus, design_id, _candidates(corpus, design_id, temporal_filter, among))
    return ranked[:k]


def distance_matrix(corpus, subset=None) -> DistanceMatrix:
    ids = list(corpus.ids() if subset is None else subset)
    for i in ids:
        corpus.record(i)
    missing = [i for i in ids if not corpus.has_descriptor(i)]
    if missing:
        raise MissingDescriptor(missing)
    descs = [corpus.descriptor(i) for i in ids]
    n = len(ids)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = distance(descs[i], descs[j])
    return DistanceMatrix(ids, values)


def novelty_csv(scores, corpus) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "timestamp", "novelty", "nearest_id"])
    for s in scores:
        ts = corpus.record(s.design_id).timestamp_str
        if s.has_predecessor:
            w.writerow([s.design_id, ts, repr(float(s.value)), s.nearest_id])
        else:
            w.writerow([s.design_id, ts, "NA", ""])
    return out.getvalue()

