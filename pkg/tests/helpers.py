"""In-memory corpora with synthetic descriptors for oracle tests."""
from datetime import datetime, timedelta, timezone

from remixscape.corpus import Corpus, DesignRecord
from remixscape.descriptor import JOINT, DesignDescriptor, ShapeDescriptor

T0 = datetime(2013, 5, 1, tzinfo=timezone.utc)
HASH = "ab" * 32


def random_descriptor(rng, shape=(4, 3), n_components=1, mode=JOINT, params_hash=HASH):
    sds = [ShapeDescriptor(rng.gamma(2.0, size=shape), params_hash) for _ in range(n_components + 1)]
    if n_components == 1:
        sds[1] = sds[0]
    return DesignDescriptor(sds[0], tuple(sds[1:]), mode)


def random_corpus(rng, n, dup_rate=0.2, tie_rate=0.3, **kw):
    """Random descriptors; some exact duplicates and some shared timestamps."""
    records, descs = [], []
    t = T0
    for i in range(n):
        if i and rng.random() >= tie_rate:
            t = t + timedelta(minutes=int(rng.integers(1, 500)))
        records.append(DesignRecord(f"x{rng.integers(10 ** 6):06d}-{i}", t,
                                    popularity=int(rng.integers(0, 50))))
        if descs and rng.random() < dup_rate:
            descs.append(descs[int(rng.integers(len(descs)))])
        else:
            descs.append(random_descriptor(rng, **kw))
    order = rng.permutation(n)  # manifest order need not be time order
    return corpus_from([records[i] for i in order], [descs[i] for i in order])


def corpus_from(records, descriptors):
    c = Corpus(list(records))
    for k, (r, d) in enumerate(zip(records, descriptors)):
        if d is None:
            continue
        key = f"{id(d):064x}"
        c.content_hashes[r.id] = key
        c.descriptor_cache[key] = d
    return c
