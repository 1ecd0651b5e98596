"""File formats: binary PGM, raw float32 sidecars, result CSV."""

from __future__ import annotations

import csv
import io
import json
import math
import os

import numpy as np

CSV_FIELDS = ("m", "trials", "successes", "rate", "gamma_mean", "seed0", "config_hash")


def write_pgm(path, img) -> None:
    """Write an 8-bit image as binary PGM (P5, maxval 255).

    Float input is clipped to [0, 1] and scaled; uint8 / bool input is used
    as is (bool maps to 0 / 255).
    """
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError("PGM images are 2D")
    if a.dtype == bool:
        a = np.where(a, 255, 0).astype(np.uint8)
    elif a.dtype != np.uint8:
        a = np.round(np.clip(a, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())


def _tokens(buf, count):
    out, pos = [], 2
    while len(out) < count:
        c = buf[pos:pos + 1]
        if not c:
            raise ValueError("truncated PGM header")
        if c == b"#":
            pos = buf.index(b"\n", pos) + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(buf) and not buf[end:end + 1].isspace():
                end += 1
            out.append(int(buf[pos:end]))
            pos = end
    # exactly one whitespace byte separates the header from the raster
    return out, pos + 1


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    (w, h, maxval), start = _tokens(buf, 3)
    if maxval > 255:
        raise ValueError("16-bit PGM is not supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=start)
    return data.reshape(h, w).copy()


def write_raw(path, arr) -> None:
    """Little-endian float32 raster; the shape goes into a ``.json`` next to it."""
    a = np.asarray(arr)
    np.ascontiguousarray(a, dtype="<f4").tofile(path)
    with open(str(path) + ".json", "w") as fh:
        json.dump({"shape": list(a.shape), "dtype": "<f4"}, fh)


def read_raw(path) -> np.ndarray:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    return np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])


def _fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def write_csv(path, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(rows))


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
