"""Readers and writers for the on-disk formats.

* SFFL: flow fields. ``b"SFFL"``, u32 h, u32 w, then h*w (dx, dy) f32 pairs.
* SFNF: feature maps and weight blobs. ``b"SFNF"``, u32 h, w, d, then
  h*w*d f32 values, row-major with channel fastest.
* PGM (P5) / PPM (P6) 8-bit images; masks are PGMs thresholded at 127.
* CSV keypoints ``name,x,y`` and boxes ``x0,y0,x1,y1``.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "save_flow",
    "load_flow",
    "save_sfnf",
    "load_sfnf",
    "read_pnm",
    "write_pnm",
    "read_mask",
    "write_mask",
    "read_keypoints_csv",
    "write_keypoints_csv",
    "read_boxes_csv",
    "read_manifest",
    "read_pairs_csv",
]


class FormatError(ValueError):
    """Malformed or unreadable input file."""


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc


def save_flow(path, flow):
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (h, w, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"SFFL" + struct.pack("<II", h, w))
        fh.write(flow.astype("<f4").tobytes())


def load_flow(path):
    raw = _read_bytes(path)
    if raw[:4] != b"SFFL":
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected b'SFFL'")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    h, w = struct.unpack("<II", raw[4:12])
    n = h * w * 2
    if len(raw) - 12 < 4 * n:
        raise FormatError(f"{path}: truncated payload ({len(raw) - 12} bytes, need {4 * n})")
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=12)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite flow values")
    return data.reshape(h, w, 2).astype(np.float64)


def save_sfnf(path, array):
    """Write an (h, w, d) array; 1-D and 2-D arrays are stored with h=1."""
    a = np.asarray(array)
    if a.ndim == 1:
        a = a.reshape(1, 1, -1)
    elif a.ndim == 2:
        a = a.reshape(1, *a.shape)
    elif a.ndim != 3:
        raise ValueError(f"SFNF stores rank <= 3 arrays, got shape {a.shape}")
    h, w, d = a.shape
    with open(path, "wb") as fh:
        fh.write(b"SFNF" + struct.pack("<III", h, w, d))
        fh.write(a.astype("<f4").tobytes())


def load_sfnf(path):
    raw = _read_bytes(path)
    if raw[:4] != b"SFNF":
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected b'SFNF'")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    h, w, d = struct.unpack("<III", raw[4:16])
    n = h * w * d
    if len(raw) - 16 < 4 * n:
        raise FormatError(f"{path}: truncated payload ({len(raw) - 16} bytes, need {4 * n})")
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=16)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values in payload")
    return data.reshape(h, w, d).astype(np.float64)


def _pnm_tokens(raw, count):
    """Parse ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PNM header")
        tokens.append(raw[i:j])
        i = j
    # exactly one whitespace byte separates header and raster
    return tokens, i + 1


def read_pnm(path):
    """Read an 8-bit binary PGM (h, w) or PPM (h, w, 3) as uint8."""
    raw = _read_bytes(path)
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported image magic {magic!r} (need P5 or P6)")
    try:
        (_, w, h, maxval), start = _pnm_tokens(raw, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"{path}: bad PNM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit images supported (maxval={maxval})")
    ch = 1 if magic == b"P5" else 3
    n = h * w * ch
    if len(raw) - start < n:
        raise FormatError(f"{path}: truncated raster")
    img = np.frombuffer(raw, dtype=np.uint8, count=n, offset=start)
    return img.reshape((h, w) if ch == 1 else (h, w, 3)).copy()


def write_pnm(path, img):
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write image of shape {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def read_mask(path):
    img = read_pnm(path)
    if img.ndim != 2:
        raise FormatError(f"{path}: masks must be grayscale PGM")
    return (img > 127).astype(np.float64)


def write_mask(path, mask):
    write_pnm(path, (np.asarray(mask) > 0.5).astype(np.uint8) * 255)


def read_keypoints_csv(path):
    """Return a list of (name, x, y). A header row ``name,x,y`` is optional."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if rows and [c.strip().lower() for c in rows[0]] == ["name", "x", "y"]:
        rows = rows[1:]
    out = []
    for lineno, row in enumerate(rows, 1):
        if len(row) != 3:
            raise FormatError(f"{path}: row {lineno} has {len(row)} fields, expected 3")
        try:
            x, y = float(row[1]), float(row[2])
        except ValueError as exc:
            raise FormatError(f"{path}: row {lineno} has non-numeric coordinates") from exc
        if not (np.isfinite(x) and np.isfinite(y)):
            raise FormatError(f"{path}: row {lineno} has non-finite coordinates")
        out.append((row[0].strip(), x, y))
    return out


def write_keypoints_csv(path, points):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["name", "x", "y"])
        for name, x, y in points:
            wr.writerow([name, repr(float(x)), repr(float(y))])


def read_boxes_csv(path):
    """Return a list of (x0, y0, x1, y1) boxes; header ``x0,y0,x1,y1`` optional."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if rows and [c.strip().lower() for c in rows[0]] == ["x0", "y0", "x1", "y1"]:
        rows = rows[1:]
    boxes = []
    for lineno, row in enumerate(rows, 1):
        try:
            box = tuple(float(v) for v in row)
        except ValueError as exc:
            raise FormatError(f"{path}: row {lineno} is not numeric") from exc
        if len(box) != 4:
            raise FormatError(f"{path}: row {lineno} has {len(box)} fields, expected 4")
        boxes.append(box)
    return boxes


def read_manifest(path):
    """JSON list of ``{"image": ..., "mask": ...}`` with paths resolved
    relative to the manifest's directory."""
    try:
        entries = json.loads(Path(path).read_text())
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(entries, list):
        raise FormatError(f"{path}: manifest must be a JSON list")
    base = Path(path).parent
    out = []
    for i, e in enumerate(entries):
        if not isinstance(e, dict) or "image" not in e:
            raise FormatError(f"{path}: entry {i} lacks an 'image' field")
        item = {k: str(base / v) if isinstance(v, str) else v for k, v in e.items()}
        out.append(item)
    return out


def read_pairs_csv(path):
    """Pair list: each row is ``source,target[,extra...]`` paths relative to the CSV."""
    base = Path(path).parent
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if rows and rows[0][0].strip().lower() in ("source", "src", "source_image"):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    else:
        header = None
    pairs = []
    for lineno, row in enumerate(rows, 1):
        if len(row) < 2 or (header and len(row) > len(header)):
            raise FormatError(f"{path}: row {lineno} has {len(row)} fields")
        vals = [str(base / c.strip()) if c.strip() else "" for c in row]
        pairs.append(dict(zip(header, vals)) if header else {"source": vals[0], "target": vals[1]})
    return pairs
