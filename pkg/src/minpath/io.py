"""Image decoding, field/path serialization and figure overlays.

Coordinate convention (used across the whole package): points are (x, y)
with the origin at the center of the top-left pixel, x rightward,
y downward; angles theta are measured from the +x axis counterclockwise.

Field files are a one-line JSON header followed by a raw little-endian
float32 payload in C order; save/load round-trips are bit-exact.
"""

from __future__ import annotations

import base64
import io as _stdio
import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .errors import CorruptFile, HeaderMismatch, UnsupportedFormat
from .grid import Grid2, LiftedGrid3, Polyline, ScalarField, TensorField2, VectorField2

__all__ = [
    "decode_image",
    "load_image",
    "field_bytes",
    "save_field",
    "load_field",
    "save_path",
    "load_path",
    "save_overlay",
]

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# distinct, colorblind-friendly stroke colors cycled over overlay paths
_PALETTE = [
    (230, 60, 50),
    (60, 120, 230),
    (40, 180, 90),
    (240, 170, 30),
    (170, 70, 200),
    (30, 200, 200),
]


# ---------------------------------------------------------------------------
# images


def _decode_png(data: bytes, path: str) -> np.ndarray:
    try:
        img = Image.open(_stdio.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptFile(f"{path}: undecodable PNG ({exc})") from exc
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return arr / 65535.0
    if img.mode in ("RGBA", "LA", "P"):
        img = img.convert("RGB") if img.mode != "LA" else img.convert("L")
    if img.mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def _pnm_tokens(data: bytes, count: int, path: str) -> tuple[list[int], int]:
    """Read `count` ASCII integers after the magic, skipping # comments.

    Returns the values and the offset of the first payload byte (one
    whitespace character after the last header token, per the format).
    """
    values: list[int] = []
    i = 2  # past the 2-byte magic
    n = len(data)
    while len(values) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        token = data[start:i]
        if not token:
            raise CorruptFile(f"{path}: truncated header")
        try:
            values.append(int(token))
        except ValueError as exc:
            raise CorruptFile(f"{path}: bad header token {token!r}") from exc
    if i >= n:
        raise CorruptFile(f"{path}: missing payload")
    return values, i + 1  # skip the single whitespace after maxval


def _decode_pnm(data: bytes, path: str) -> np.ndarray:
    magic = data[:2]
    channels = 1 if magic == b"P5" else 3
    (w, h, maxval), offset = _pnm_tokens(data, 3, path)
    if w <= 0 or h <= 0:
        raise CorruptFile(f"{path}: non-positive dimensions {w}x{h}")
    if not 0 < maxval < 65536:
        raise CorruptFile(f"{path}: maxval {maxval} out of range")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * channels * dtype.itemsize
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise CorruptFile(
            f"{path}: payload has {len(payload)} bytes, expected {need}"
        )
    arr = np.frombuffer(payload, dtype=dtype).astype(np.float64) / float(maxval)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return arr.reshape(shape)


def decode_image(data: bytes, label: str = "<bytes>") -> np.ndarray:
    """Decode in-memory PNG or binary PGM/PPM data to float values in [0, 1].

    Grayscale images come back as (h, w); color as (h, w, 3).
    Raises UnsupportedFormat for other formats (including ASCII PNM)
    and CorruptFile for truncated or undecodable data.
    """
    if data.startswith(_PNG_MAGIC):
        return _decode_png(data, label)
    if data[:2] in (b"P5", b"P6"):
        return _decode_pnm(data, label)
    if data[:2] in (b"P1", b"P2", b"P3", b"P4"):
        raise UnsupportedFormat(
            f"{label}: only binary PGM (P5) / PPM (P6) variants are supported"
        )
    raise UnsupportedFormat(f"{label}: not a PNG or binary PGM/PPM file")


def load_image(path: str | Path) -> np.ndarray:
    """Decode a PNG or binary PGM/PPM file; see decode_image."""
    p = Path(path)
    if not p.is_file():
        raise CorruptFile(f"{p}: no such file")
    return decode_image(p.read_bytes(), str(p))


# ---------------------------------------------------------------------------
# fields


def _field_kind(field) -> tuple[str, dict]:
    if isinstance(field, ScalarField):
        if isinstance(field.grid, LiftedGrid3):
            g = field.grid
            return "scalar", {"w": g.width, "h": g.height, "t": g.n_theta}
        g = field.grid
        return "scalar", {"w": g.width, "h": g.height}
    if isinstance(field, VectorField2):
        g = field.grid
        return "vector", {"w": g.width, "h": g.height}
    if isinstance(field, TensorField2):
        g = field.grid
        return "tensor", {"w": g.width, "h": g.height}
    raise UnsupportedFormat(f"cannot serialize {type(field).__name__}")


def field_bytes(field) -> bytes:
    """Serialized form of a field: one-line JSON header + raw float32 payload."""
    kind, dims = _field_kind(field)
    header = {**dims, "kind": kind}
    payload = np.ascontiguousarray(field.values, dtype="<f4").tobytes()
    return json.dumps(header, separators=(",", ":")).encode("ascii") + b"\n" + payload


def save_field(field, path: str | Path) -> None:
    """Write a field as a one-line JSON header plus raw float32 payload."""
    Path(path).write_bytes(field_bytes(field))


def load_field(path: str | Path):
    """Inverse of save_field; bit-exact on float32 data.

    Raises HeaderMismatch when the payload length disagrees with the
    header and CorruptFile when the header itself is unreadable.
    """
    p = Path(path)
    if not p.is_file():
        raise CorruptFile(f"{p}: no such file")
    data = p.read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise CorruptFile(f"{p}: missing header line")
    try:
        header = json.loads(data[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{p}: unreadable header ({exc})") from exc
    if not isinstance(header, dict):
        raise CorruptFile(f"{p}: header is not an object")
    try:
        w = int(header["w"])
        h = int(header["h"])
        kind = header["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"{p}: header missing w/h/kind ({exc})") from exc
    t = header.get("t")
    if w <= 0 or h <= 0 or (t is not None and int(t) <= 0):
        raise HeaderMismatch(f"{p}: non-positive dimensions in header")
    payload = data[nl + 1 :]

    if kind == "scalar" and t is not None:
        shape: tuple = (int(t), h, w)
    elif kind == "scalar":
        shape = (h, w)
    elif kind == "vector":
        shape = (h, w, 2)
    elif kind == "tensor":
        # symmetric tensors are stored packed as (m11, m12, m22)
        shape = (h, w, 3)
    else:
        raise HeaderMismatch(f"{p}: unknown field kind {kind!r}")
    need = int(np.prod(shape)) * 4
    if len(payload) != need:
        raise HeaderMismatch(
            f"{p}: payload has {len(payload)} bytes, header implies {need}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(shape)
    if kind == "scalar" and t is not None:
        return ScalarField(LiftedGrid3(w, h, int(t)), values.copy())
    if kind == "scalar":
        return ScalarField(Grid2(w, h), values.copy())
    if kind == "vector":
        return VectorField2(Grid2(w, h), values.copy())
    return TensorField2(Grid2(w, h), values.copy())


# ---------------------------------------------------------------------------
# paths


def save_path(polyline: Polyline, path: str | Path) -> None:
    """Write a polyline as JSON {"closed": bool, "points": [[x, y(, theta)]...]}.

    Coordinates use Python's shortest exact decimal representation, so a
    save/load round-trip reproduces every coordinate bit-for-bit.
    """
    pts = [[float(c) for c in row] for row in np.asarray(polyline.points)]
    doc = {"closed": bool(polyline.closed), "points": pts}
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_path(path: str | Path) -> Polyline:
    """Inverse of save_path."""
    p = Path(path)
    if not p.is_file():
        raise CorruptFile(f"{p}: no such file")
    try:
        doc = json.loads(p.read_text(encoding="ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{p}: unreadable path file ({exc})") from exc
    if (
        not isinstance(doc, dict)
        or "closed" not in doc
        or "points" not in doc
        or not isinstance(doc["points"], list)
    ):
        raise CorruptFile(f"{p}: expected an object with closed/points")
    pts = np.asarray(doc["points"], dtype=np.float64)
    return Polyline(points=pts, closed=bool(doc["closed"]))


# ---------------------------------------------------------------------------
# overlays


def _to_rgb_u8(image: np.ndarray) -> np.ndarray:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    return np.round(arr * 255.0).astype(np.uint8)


def _path_xy(polyline: Polyline) -> list[tuple[float, float]]:
    pts = [(float(q[0]), float(q[1])) for q in polyline.points]
    if polyline.closed:
        pts.append(pts[0])
    return pts


def _overlay_png(image: np.ndarray, paths, out: Path) -> None:
    img = Image.fromarray(_to_rgb_u8(image), mode="RGB")
    draw = ImageDraw.Draw(img)
    for i, pl in enumerate(paths):
        color = _PALETTE[i % len(_PALETTE)]
        pts = _path_xy(pl)
        if len(pts) == 1:
            draw.point(pts, fill=color)
        else:
            draw.line(pts, fill=color, width=1)
    img.save(out, format="PNG")


def _overlay_svg(image: np.ndarray, paths, out: Path) -> None:
    rgb = _to_rgb_u8(image)
    h, w = rgb.shape[:2]
    buf = _stdio.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    uri = "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="{w}" height="{h}" viewBox="-0.5 -0.5 {w} {h}">',
        f'<image x="-0.5" y="-0.5" width="{w}" height="{h}" xlink:href="{uri}"/>',
    ]
    for i, pl in enumerate(paths):
        r, g, b = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in _path_xy(pl))
        lines.append(
            f'<polyline points="{pts}" fill="none" '
            f'stroke="rgb({r},{g},{b})" stroke-width="1"/>'
        )
    lines.append("</svg>")
    out.write_text("\n".join(lines) + "\n", encoding="ascii")


def save_overlay(image: np.ndarray, paths, out: str | Path) -> None:
    """Draw polylines over an image; .png rasterizes, .svg embeds.

    `paths` is an iterable of Polyline (lifted points are projected to
    their x, y coordinates for display).
    """
    outp = Path(out)
    suffix = outp.suffix.lower()
    plist = list(paths)
    if suffix == ".png":
        _overlay_png(image, plist, outp)
    elif suffix == ".svg":
        _overlay_svg(image, plist, outp)
    else:
        raise UnsupportedFormat(f"{outp}: overlay must end in .png or .svg")
