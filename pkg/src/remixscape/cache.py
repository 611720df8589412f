"""Append-only binary descriptor cache keyed by mesh content hash.

Layout (all integers little-endian)::

    header  b"RMXD" | u16 version | u16 R | u16 L | 32-byte params hash
    record  32-byte sha256 of mesh bytes | u8 mode | u16 count
            | count * R * L float64 energies (joint first, then components)

A crash can only leave a partial trailing record.  Readers ignore it and
the next writer truncates it away before appending.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import struct

import numpy as np

from .descriptor import JOINT, MATCHED, DesignDescriptor, ShapeDescriptor
from .errors import CacheFormatError, CacheMismatch

log = logging.getLogger(__name__)

MAGIC = b"RMXD"
VERSION = 1
_HEAD = struct.Struct("<4sHHH32s")
_REC = struct.Struct("<32sBH")
_MODE_TAG = {JOINT: 0, MATCHED: 1}
_TAG_MODE = {v: k for k, v in _MODE_TAG.items()}


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _parse(buf: bytes):
    if len(buf) < _HEAD.size:
        raise CacheFormatError("cache file shorter than its header")
    magic, version, r, l, phash = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CacheFormatError("not a descriptor cache (bad magic)")
    if version != VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    entries = {}
    pos = _HEAD.size
    block = r * l * 8
    while pos + _REC.size <= len(buf):
        key, tag, count = _REC.unpack_from(buf, pos)
        end = pos + _REC.size + count * block
        if end > len(buf):
            break
        if tag not in _TAG_MODE or count < 2:
            raise CacheFormatError(f"corrupt record at byte {pos}")
        e = np.frombuffer(buf, dtype="<f8", count=count * r * l, offset=pos + _REC.size)
        e = e.reshape(count, r, l).astype(np.float64)
        entries[key.hex()] = (_TAG_MODE[tag], e)
        pos = end
    if pos != len(buf):
        log.warning("ignoring %d trailing bytes of an incomplete cache record", len(buf) - pos)
    return (r, l, phash.hex()), entries, pos


class DescriptorCache:
    """Content-addressed store of DesignDescriptors for one parameter set.

    Used from a single thread; concurrent producers hand results to the
    owner, which appends them in a deterministic order.
    """

    def __init__(self, path, params_hash: str, radii: int, bands: int):
        self.path = os.fspath(path)
        self.params_hash = params_hash
        self.shape = (radii, bands)
        self._entries: dict[str, DesignDescriptor] = {}
        self._valid_length = None
        if os.path.exists(self.path) and os.path.getsize(self.path) > 0:
            with open(self.path, "rb") as f:
                buf = f.read()
            (r, l, phash), raw, self._valid_length = _parse(buf)
            if phash != params_hash or (r, l) != self.shape:
                raise CacheMismatch(
                    f"{self.path} was built with different descriptor parameters "
                    f"({phash[:12]}..., R={r}, L={l})"
                )
            for key, (mode, e) in raw.items():
                self._entries[key] = self._to_descriptor(mode, e)

    def _to_descriptor(self, mode, e):
        sds = [ShapeDescriptor(x, self.params_hash) for x in e]
        return DesignDescriptor(sds[0], tuple(sds[1:]), mode)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> DesignDescriptor | None:
        return self._entries.get(key)

    def keys(self):
        return list(self._entries)

    def append(self, key: str, dd: DesignDescriptor) -> None:
        if dd.params_hash != self.params_hash:
            raise CacheMismatch("descriptor computed under a different parameter set")
        if key in self._entries:
            return
        energies = np.stack([sd.energies for sd in dd.all()]).astype("<f8")
        if energies.shape[1:] != self.shape:
            raise CacheMismatch(f"descriptor shape {energies.shape[1:]} != cache shape {self.shape}")
        record = _REC.pack(bytes.fromhex(key), _MODE_TAG[dd.mode], len(energies)) + energies.tobytes()
        fresh = self._valid_length is None
        with open(self.path, "r+b" if not fresh else "wb") as f:
            if fresh:
                r, l = self.shape
                f.write(_HEAD.pack(MAGIC, VERSION, r, l, bytes.fromhex(self.params_hash)))
            else:
                f.truncate(self._valid_length)
                f.seek(self._valid_length)
            f.write(record)
            f.flush()
            os.fsync(f.fileno())
            self._valid_length = f.tell()
        self._entries[key] = dd

    def to_json(self) -> dict:
        return {
            "format": "remixscape-descriptor-cache",
            "version": VERSION,
            "params_hash": self.params_hash,
            "radii": self.shape[0],
            "bands": self.shape[1],
            "records": [
                {
                    "content_hash": key,
                    "mode": dd.mode,
                    "joint": dd.joint.energies.tolist(),
                    "per_component": [sd.energies.tolist() for sd in dd.per_component],
                }
                for key, dd in self._entries.items()
            ],
        }

    def export_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1)
            f.write("\n")
