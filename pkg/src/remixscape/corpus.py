"""Corpus ingestion: manifest, mesh fetching and batch descriptor computation."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import urllib.request
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone

from .errors import (
    BadTimestamp, BadValue, DataError, DuplicateId, ManifestSyntax, MissingDescriptor,
    UnknownDesign, UserError,
)

log = logging.getLogger(__name__)

REQUIRED = ("id", "file", "timestamp", "parents", "popularity")


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 to an aware UTC datetime; naive values are taken as UTC."""
    if not isinstance(text, str):
        raise ValueError("timestamp must be a string")
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    fmt = "%Y-%m-%dT%H:%M:%S.%fZ" if ts.microsecond else "%Y-%m-%dT%H:%M:%SZ"
    return ts.astimezone(timezone.utc).strftime(fmt)


def is_url(ref: str) -> bool:
    return ref.startswith(("http://", "https://"))


@dataclass(frozen=True)
class DesignRecord:
    id: str
    timestamp: datetime
    parents: tuple[str, ...] = ()
    popularity: int = 0
    mesh_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("id must be a non-empty string")
        if len(set(self.parents)) != len(self.parents):
            raise ValueError(f"duplicate parent in {self.id!r}")
        if self.id in self.parents:
            raise ValueError(f"{self.id!r} lists itself as a parent")
        if isinstance(self.popularity, bool) or not isinstance(self.popularity, int) or self.popularity < 0:
            raise ValueError("popularity must be a non-negative integer")

    @property
    def timestamp_str(self) -> str:
        return format_timestamp(self.timestamp)


@dataclass
class DesignFailure:
    design_id: str
    kind: str  # FetchFailed, ParseFailed, DegenerateGeometry
    message: str

    def line(self) -> str:
        return f"{self.design_id}\t{self.kind}\t{self.message}"


@dataclass
class Corpus:
    records: list[DesignRecord]
    base_dir: str = "."
    config: object = None  # DescriptorConfig
    local_paths: dict[str, str] = field(default_factory=dict)
    content_hashes: dict[str, str] = field(default_factory=dict)
    descriptor_cache: dict = field(default_factory=dict)  # content hash -> DesignDescriptor

    def __post_init__(self):
        self._by_id = {}
        for r in self.records:
            if r.id in self._by_id:
                raise DuplicateId(r.id)
            self._by_id[r.id] = r
        for r in self.records:
            if r.id not in self.local_paths and r.mesh_ref and not is_url(r.mesh_ref):
                self.local_paths[r.id] = os.path.join(self.base_dir, r.mesh_ref)

    def __len__(self):
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def record(self, design_id: str) -> DesignRecord:
        try:
            return self._by_id[design_id]
        except KeyError:
            raise UnknownDesign(f"unknown design {design_id!r}") from None

    def has_descriptor(self, design_id: str) -> bool:
        h = self.content_hashes.get(design_id)
        return h is not None and h in self.descriptor_cache

    def descriptor(self, design_id: str):
        self.record(design_id)
        if not self.has_descriptor(design_id):
            raise MissingDescriptor([design_id])
        return self.descriptor_cache[self.content_hashes[design_id]]


def load_manifest(path) -> Corpus:
    """Read a JSON-Lines manifest.  Any bad row aborts the whole load."""
    records, seen = [], set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestSyntax(f"invalid JSON ({e.msg})", lineno) from None
            if not isinstance(row, dict):
                raise ManifestSyntax("row is not a JSON object", lineno)
            missing = [k for k in REQUIRED if k not in row]
            if missing:
                raise ManifestSyntax(f"missing field(s): {', '.join(missing)}", lineno)
            try:
                ts = parse_timestamp(row["timestamp"])
            except ValueError:
                raise BadTimestamp(f"invalid ISO-8601 timestamp {row['timestamp']!r}", lineno) from None
            if not isinstance(row["id"], str) or not isinstance(row["file"], str):
                raise BadValue("id and file must be strings", lineno)
            parents = row["parents"]
            if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
                raise BadValue("parents must be an array of strings", lineno)
            if row["id"] in seen:
                raise DuplicateId(row["id"], lineno)
            try:
                rec = DesignRecord(row["id"], ts, tuple(parents), row["popularity"], row["file"])
            except ValueError as e:
                raise BadValue(str(e), lineno) from None
            seen.add(rec.id)
            records.append(rec)
    return Corpus(records, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# fetching


@dataclass
class FetchReport:
    downloaded: int = 0
    reused: int = 0
    failures: list[DesignFailure] = field(default_factory=list)


def url_cache_name(url: str) -> str:
    return hashlib.sha256(url.encode()).hexdigest() + ".stl"


def _download(url, dest, timeout):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        data = resp.read()
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(dest), suffix=".part")
    with os.fdopen(fd, "wb") as f:
        f.write(data)
    os.replace(tmp, dest)


def fetch_meshes(corpus: Corpus, cache_dir, concurrency_limit: int = 4, timeout: float = 30.0) -> FetchReport:
    """Download remote meshes into ``cache_dir``, each URL at most once.

    Files already in the cache are reused without network access.  Failed
    downloads are reported per design; the batch always completes.
    """
    if concurrency_limit < 1:
        raise UserError("concurrency limit must be >= 1")
    report = FetchReport()
    urls = []
    for r in corpus.records:
        if is_url(r.mesh_ref) and r.mesh_ref not in urls:
            urls.append(r.mesh_ref)
    if not urls:
        return report
    os.makedirs(cache_dir, exist_ok=True)
    dest = {u: os.path.join(cache_dir, url_cache_name(u)) for u in urls}
    todo = [u for u in urls if not os.path.exists(dest[u])]
    report.reused = len(urls) - len(todo)

    def job(u):
        try:
            _download(u, dest[u], timeout)
            return None
        except Exception as e:  # noqa: BLE001 - any transport failure is per-design
            return f"{type(e).__name__}: {e}"

    errors = {}
    with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
        for u, err in zip(todo, pool.map(job, todo)):
            if err is None:
                report.downloaded += 1
            else:
                errors[u] = err
    for r in corpus.records:
        if not is_url(r.mesh_ref):
            continue
        if r.mesh_ref in errors:
            corpus.local_paths.pop(r.id, None)
            report.failures.append(DesignFailure(r.id, "FetchFailed", f"{r.mesh_ref}: {errors[r.mesh_ref]}"))
        else:
            corpus.local_paths[r.id] = dest[r.mesh_ref]
    return report


# ---------------------------------------------------------------------------
# descriptors


@dataclass
class DescribeReport:
    computed: int = 0
    cache_hits: int = 0
    failures: list[DesignFailure] = field(default_factory=list)


def _describe_job(args):
    data, config = args
    from .descriptor import describe
    from .mesh_io import parse_stl

    try:
        mesh = parse_stl(data)
    except DataError as e:
        return "ParseFailed", f"{type(e).__name__}: {e}"
    try:
        return "ok", describe(mesh, config)
    except DataError as e:
        return type(e).__name__, str(e)


def compute_descriptors(corpus: Corpus, cache_path=None, parallelism: int = 1) -> DescribeReport:
    """Fill ``corpus.descriptor_cache`` for every design with a local mesh.

    Descriptors are keyed by the sha256 of the mesh bytes, so identical
    files are described once.  Misses are computed by up to
    ``parallelism`` worker processes and appended to the on-disk cache in
    manifest order, so the cache file does not depend on scheduling.
    """
    from .cache import DescriptorCache, content_hash
    from .descriptor import DescriptorConfig

    config = corpus.config or DescriptorConfig()
    corpus.config = config
    if parallelism < 1:
        raise UserError("parallelism must be >= 1")
    report = DescribeReport()
    disk = None
    if cache_path is not None:
        disk = DescriptorCache(cache_path, config.params_hash, config.radii, config.bands)

    owners: dict[str, list[str]] = {}
    payload: dict[str, bytes] = {}
    for r in corpus.records:
        path = corpus.local_paths.get(r.id)
        if path is None:
            if not is_url(r.mesh_ref):
                report.failures.append(DesignFailure(r.id, "ParseFailed", "no mesh file"))
            continue  # remote meshes that failed to fetch are already reported
        try:
            with open(path, "rb") as f:
                data = f.read()
        except OSError as e:
            report.failures.append(DesignFailure(r.id, "ParseFailed", f"{e.strerror}: {path}"))
            continue
        key = content_hash(data)
        corpus.content_hashes[r.id] = key
        if key not in owners:
            owners[key] = []
            payload[key] = data
        owners[key].append(r.id)

    misses = []
    for key in owners:
        cached = corpus.descriptor_cache.get(key) or (disk.get(key) if disk else None)
        if cached is not None and cached.params_hash == config.params_hash:
            corpus.descriptor_cache[key] = cached
            report.cache_hits += 1
        else:
            misses.append(key)

    jobs = ((payload[k], config) for k in misses)
    if parallelism == 1 or len(misses) <= 1:
        results = map(_describe_job, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=parallelism)
        results = pool.map(_describe_job, jobs)
    failed = {}
    try:
        for key, (status, value) in zip(misses, results):
            if status == "ok":
                report.computed += 1
                corpus.descriptor_cache[key] = value
                if disk is not None:
                    disk.append(key, value)
            else:
                failed[key] = (status, value)
    finally:
        if pool is not None:
            pool.shutdown()

    for r in corpus.records:
        key = corpus.content_hashes.get(r.id)
        if key in failed:
            del corpus.content_hashes[r.id]
            report.failures.append(DesignFailure(r.id, *failed[key]))
    order = {r.id: k for k, r in enumerate(corpus.records)}
    report.failures.sort(key=lambda f: order[f.design_id])
    if report.failures:
        log.warning("%d design(s) have no descriptor and are excluded", len(report.failures))
    return report


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class PipelineConfig:
    descriptor: object  # DescriptorConfig
    z_transform: str = "log1p"


def load_config(path=None) -> PipelineConfig:
    """JSON config with descriptor keys plus ``z_transform``."""
    from .descriptor import DescriptorConfig

    if path is None:
        return PipelineConfig(DescriptorConfig())
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UserError(f"cannot read config {path}: {e}") from None
    if not isinstance(raw, dict):
        raise UserError("config must be a JSON object")
    names = {"resolution": "resolution", "radii": "radii", "bands": "bands",
             "bandwidth": "bandwidth", "mode": "mode", "weld_tolerance": "weld_tolerance",
             "smoothing": "smoothing"}
    unknown = set(raw) - set(names) - {"z_transform"}
    if unknown:
        raise UserError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    z = raw.get("z_transform", "log1p")
    if z not in ("raw", "log1p"):
        raise UserError("z_transform must be 'raw' or 'log1p'")
    kwargs = {names[k]: v for k, v in raw.items() if k in names}
    valid = {f.name for f in fields(DescriptorConfig)}
    assert set(kwargs) <= valid
    try:
        return PipelineConfig(DescriptorConfig(**kwargs), z)
    except (TypeError, ValueError) as e:
        raise UserError(f"bad config: {e}") from None
