"""File formats: Middlebury ``.flo``, grayscale PFM, binary PGM masks, point-track CSV, JSON.

Every writer goes through :func:`atomic_write`, so a crash never leaves a
half-written file behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import FormatError, InputError

FLO_MAGIC = 202021.25
FLO_TAG = b"PIEH"
TRACK_COLUMNS = ("view_id", "point_id", "px", "py", "gt_depth", "body_id")


def atomic_write(path, data: bytes) -> Path:
    """Write ``data`` to a temporary file next to ``path``, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


# --- optical flow -------------------------------------------------------------

def encode_flow(flow) -> bytes:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise InputError(f"flow must have shape (h, w, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    header = np.array([FLO_MAGIC], "<f4").tobytes() + np.array([w, h], "<i4").tobytes()
    return header + np.ascontiguousarray(flow, dtype="<f4").tobytes()


def decode_flow(data: bytes) -> np.ndarray:
    if len(data) < 12:
        raise FormatError("truncated .flo header", offset=len(data))
    if data[:4] != FLO_TAG:
        raise FormatError(f"bad .flo magic {data[:4]!r}", offset=0)
    w, h = (int(x) for x in np.frombuffer(data, "<i4", count=2, offset=4))
    if w <= 0 or h <= 0:
        raise FormatError(f"bad .flo dimensions {w}x{h}", offset=4)
    expected = 12 + 8 * w * h
    if len(data) < expected:
        raise FormatError(f"truncated .flo payload: need {expected} bytes, have {len(data)}", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after .flo payload", offset=expected)
    values = np.frombuffer(data, "<f4", count=2 * w * h, offset=12)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError("non-finite flow value", offset=12 + 4 * int(bad[0]))
    return values.reshape(h, w, 2).astype(np.float32)


def write_flow(path, flow) -> Path:
    return atomic_write(path, encode_flow(flow))


def read_flow(path) -> np.ndarray:
    """Return an ``(h, w, 2)`` float32 array of ``(u, v)`` displacements."""
    return decode_flow(_read_bytes(path))


# --- PFM ------------------------------------------------------------------------

_PFM_HEADER = re.compile(rb"\A(P[fF])\s*\n\s*(\d+)\s+(\d+)\s*\n\s*([-+0-9.eE]+)\s*\n")


def encode_pfm(image) -> bytes:
    """Grayscale little-endian PFM; rows are stored bottom to top."""
    image = np.asarray(image)
    if image.ndim == 1:
        image = image[None, :]
    if image.ndim != 2:
        raise InputError(f"PFM image must be 2-D, got shape {image.shape}")
    h, w = image.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(image[::-1], dtype="<f4").tobytes()


def decode_pfm(data: bytes) -> np.ndarray:
    m = _PFM_HEADER.match(data)
    if m is None:
        raise FormatError("malformed PFM header", offset=0)
    if m.group(1) == b"PF":
        raise FormatError("colour PFM ('PF') is not supported", offset=0)
    w, h = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError:
        raise FormatError(f"bad PFM scale {m.group(4)!r}", offset=m.start(4)) from None
    if scale == 0 or w <= 0 or h <= 0:
        raise FormatError("PFM scale must be nonzero and dimensions positive", offset=m.start(2))
    start = m.end()
    need = 4 * w * h
    if len(data) - start < need:
        raise FormatError(f"truncated PFM payload: need {need} bytes, have {len(data) - start}",
                          offset=len(data))
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(data, dtype, count=w * h, offset=start).reshape(h, w)
    return values[::-1].astype(np.float32)


def write_pfm(path, image) -> Path:
    return atomic_write(path, encode_pfm(image))


def read_pfm(path) -> np.ndarray:
    """Return the image top row first, as float32."""
    return decode_pfm(_read_bytes(path))


# --- PGM masks ------------------------------------------------------------------

def encode_pgm(mask) -> bytes:
    """Binary 8-bit PGM; nonzero mask entries become 255."""
    mask = np.asarray(mask)
    if mask.ndim == 1:
        mask = mask[None, :]
    h, w = mask.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.where(mask != 0, 255, 0).astype(np.uint8).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    m = re.match(rb"\AP5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise FormatError("malformed PGM header", offset=0)
    w, h, maxval = (int(g) for g in m.groups())
    if maxval > 255:
        raise FormatError("only 8-bit PGM is supported", offset=m.start(3))
    start = m.end()
    if len(data) - start < w * h:
        raise FormatError("truncated PGM payload", offset=len(data))
    return np.frombuffer(data, np.uint8, count=w * h, offset=start).reshape(h, w) > 0


def write_pgm(path, mask) -> Path:
    return atomic_write(path, encode_pgm(mask))


def read_pgm(path) -> np.ndarray:
    return decode_pgm(_read_bytes(path))


# --- text formats -----------------------------------------------------------------

def write_json(path, obj) -> Path:
    return atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def read_json(path):
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}", offset=getattr(exc, "pos", 0)) from exc


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return atomic_write(path, buf.getvalue().encode("utf-8"))


def read_csv(path) -> list[dict]:
    text = _read_bytes(path).decode("utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def write_tracks(path, views, gt_depths=None, body_ids=None) -> Path:
    """One row per (view, point); empty cells when depth or body id are unknown."""
    rows = []
    for k, view in enumerate(views):
        px = view.pixels
        for i, pid in enumerate(view.point_ids):
            depth = "" if gt_depths is None else repr(float(gt_depths[k][i]))
            body = "" if body_ids is None else int(body_ids[i])
            rows.append((k, int(pid), repr(float(px[i, 0])), repr(float(px[i, 1])), depth, body))
    return write_csv(path, TRACK_COLUMNS, rows)


def read_tracks(path) -> dict:
    """Parse a track CSV into per-view arrays keyed by view id.

    Returns ``{view_id: {"point_id", "pixels", "gt_depth" (or None), "body_id" (or None)}}``.
    """
    rows = read_csv(path)
    if not rows:
        raise FormatError(f"{path} has no track rows", offset=0)
    missing = set(TRACK_COLUMNS[:4]) - set(rows[0])
    if missing:
        raise FormatError(f"{path} lacks columns {sorted(missing)}", offset=0)
    by_view: dict = {}
    for line, row in enumerate(rows, start=2):
        try:
            k = int(row["view_id"])
            entry = (int(row["point_id"]), float(row["px"]), float(row["py"]),
                     float(row["gt_depth"]) if row.get("gt_depth") else None,
                     int(row["body_id"]) if row.get("body_id") else None)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}, line {line}: {exc}", offset=line) from exc
        by_view.setdefault(k, []).append(entry)
    out = {}
    for k in sorted(by_view):
        entries = by_view[k]
        depth = [e[3] for e in entries]
        body = [e[4] for e in entries]
        out[k] = {
            "point_id": np.array([e[0] for e in entries], dtype=np.int64),
            "pixels": np.array([(e[1], e[2]) for e in entries], dtype=np.float64),
            "gt_depth": None if any(d is None for d in depth) else np.array(depth),
            "body_id": None if any(b is None for b in body) else np.array(body, dtype=np.int64),
        }
    return out
