"""Time-tag file formats.

Binary layout (little endian):

    magic   4 bytes  "PTT1"
    version u16
    resolution_ps u32   timestamp unit (this writer always uses 1)
    channel_count u8
    records: channel u8, t u64   (9 bytes each)

The format is append-friendly and trivially seekable. A JSON manifest
sidecar (``<file>.manifest.json``) records the exact parameters behind a
simulated file so any analysis can be reproduced from the report alone.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .model import DataError, TagStream

MAGIC = b"PTT1"
VERSION = 1
_HEADER = struct.Struct("<HIB")
_RECORD_DTYPE = np.dtype([("channel", "u1"), ("t", "<u8")])


def write_tags(stream: TagStream, path, resolution_ps=1):
    """Write a stream as a binary tag file."""
    if resolution_ps != 1:
        raise DataError("this writer emits 1 ps resolution files only")
    records = np.empty(len(stream), dtype=_RECORD_DTYPE)
    records["channel"] = stream.channels
    records["t"] = stream.times.astype(np.uint64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, resolution_ps, stream.channel_count))
        records.tofile(fh)


def read_tags(path) -> TagStream:
    """Read a binary tag file back into a TagStream (times in ps)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: not a tag file (magic {magic!r})")
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DataError(f"{path}: truncated header")
        version, resolution_ps, channel_count = _HEADER.unpack(header)
        if version != VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        payload = fh.read()
    if len(payload) % _RECORD_DTYPE.itemsize:
        raise DataError(f"{path}: truncated record section")
    records = np.frombuffer(payload, dtype=_RECORD_DTYPE)
    times = records["t"].astype(np.int64)
    if resolution_ps != 1:
        times = times * int(resolution_ps)
    return TagStream(records["channel"].copy(), times, channel_count)


def write_tags_csv(stream: TagStream, path):
    """Human-readable companion format: ``channel,t_ps`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("channel,t_ps\n")
        for channel, t in zip(stream.channels, stream.times):
            fh.write(f"{int(channel)},{int(t)}\n")


def read_tags_csv(path) -> TagStream:
    channels, times = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("channel"):
                continue
            try:
                ch, t = line.split(",")
                channels.append(int(ch))
                times.append(int(t))
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected 'channel,t_ps', got {line!r}") from None
    n_ch = (max(channels) + 1) if channels else 2
    return TagStream(np.asarray(channels, np.uint8), np.asarray(times, np.int64),
                     max(n_ch, 2))


def manifest_path(tag_path) -> Path:
    return Path(str(tag_path) + ".manifest.json")


def _jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_manifest(tag_path, payload: dict):
    """Sidecar with every knob of the run; no timestamps, so reruns match."""
    doc = {"format": "photonstats-manifest", "version": __version__}
    doc.update(_jsonable(payload))
    with open(manifest_path(tag_path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(tag_path) -> dict | None:
    path = manifest_path(tag_path)
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
