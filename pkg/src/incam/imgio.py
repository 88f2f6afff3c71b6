"""Binary netpbm rasters (P5/P6, maxval 255) and JSON model loaders."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ParseError(ValueError):
    """Malformed raster or model file. ``offset`` is the byte position (or -1)."""

    def __init__(self, message: str, offset: int = -1):
        self.offset = offset
        if offset >= 0:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit luma image; ``pixels`` has shape (height, width), dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"gray image needs a 2-D array, got shape {px.shape}")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def samples(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB image; ``pixels`` has shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"rgb image needs shape (h, w, 3), got {px.shape}")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def samples(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        return isinstance(other, RgbImage) and np.array_equal(self.pixels, other.pixels)


_WHITESPACE = b" \t\n\r\v\f"


def _read_header(data: bytes, magic: bytes) -> tuple[int, int, int]:
    """Parse a netpbm header; returns (width, height, payload_offset)."""
    if len(data) < 2:
        raise ParseError("truncated header", len(data))
    if data[:2] != magic:
        raise ParseError(f"bad magic {data[:2]!r}, expected {magic!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ParseError("truncated header", pos)
        c = data[pos : pos + 1]
        if c in _WHITESPACE:
            pos += 1
        elif c == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise ParseError("unterminated header comment", pos)
            pos = end + 1
        elif c.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append((int(data[start:pos]), start))
        else:
            raise ParseError(f"unexpected byte {c!r} in header", pos)
    (width, _), (height, hpos), (maxval, mpos) = fields
    if width <= 0 or height <= 0:
        raise ParseError(f"non-positive dimensions {width}x{height}", hpos)
    if maxval != 255:
        raise ParseError(f"maxval must be 255, got {maxval}", mpos)
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise ParseError("missing whitespace after maxval", pos)
    return width, height, pos + 1


def _payload(data: bytes, offset: int, expected: int) -> np.ndarray:
    got = len(data) - offset
    if got < expected:
        raise ParseError(f"truncated payload: {got} of {expected} bytes", len(data))
    if got > expected:
        raise ParseError(f"{got - expected} trailing bytes after payload", offset + expected)
    return np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)


def read_pgm(data: bytes) -> GrayImage:
    width, height, offset = _read_header(data, b"P5")
    px = _payload(data, offset, width * height)
    return GrayImage(px.reshape(height, width))


def write_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.samples


def read_ppm(data: bytes) -> RgbImage:
    width, height, offset = _read_header(data, b"P6")
    px = _payload(data, offset, 3 * width * height)
    return RgbImage(px.reshape(height, width, 3))


def write_ppm(img: RgbImage) -> bytes:
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + img.samples


def rgb_to_gray(img: RgbImage) -> GrayImage:
    # BT.601 luma, round half up on non-negative values
    rgb = img.pixels.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return GrayImage(np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8))


def load_pgm(path) -> GrayImage:
    return read_pgm(Path(path).read_bytes())


def save_pgm(path, img: GrayImage) -> None:
    Path(path).write_bytes(write_pgm(img))


def load_ppm(path) -> RgbImage:
    return read_ppm(Path(path).read_bytes())


def save_ppm(path, img: RgbImage) -> None:
    Path(path).write_bytes(write_ppm(img))


def _json(data) -> dict:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.pos) from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object")
    return doc


def _field(doc: dict, key: str, where: str):
    if key not in doc:
        raise ParseError(f"missing field {where}{key!r}")
    return doc[key]


def load_mlp_json(data):
    """Parse an MLP weight file into an :class:`incam.nnauth.MlpModel`."""
    from incam.nnauth import FixedFormat, MlpModel

    doc = _json(data)
    topology = _field(doc, "topology", "")
    if not isinstance(topology, list) or len(topology) < 2 or not all(
        isinstance(n, int) and n > 0 for n in topology
    ):
        raise ParseError("field 'topology' must list at least two positive layer sizes")
    weights = _field(doc, "weights", "")
    if not isinstance(weights, list) or len(weights) != len(topology) - 1:
        raise ParseError(f"field 'weights' must hold {len(topology) - 1} matrices")
    mats = []
    for i, w in enumerate(weights):
        try:
            m = np.array(w, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"field 'weights[{i}]' is not a numeric matrix") from exc
        shape = (topology[i] + 1, topology[i + 1])
        if m.shape != shape:
            raise ParseError(f"field 'weights[{i}]' has shape {m.shape}, expected {shape}")
        mats.append(m)
    fmt = None
    if "format" in doc:
        f = doc["format"]
        if not isinstance(f, dict) or "bits" not in f or "frac" not in f:
            raise ParseError("field 'format' needs 'bits' and 'frac'")
        try:
            fmt = FixedFormat(int(f["bits"]), int(f["frac"]))
        except ValueError as exc:
            raise ParseError(f"field 'format': {exc}") from exc
    if "lut_domain" in doc and list(doc["lut_domain"]) != [-8, 8]:
        raise ParseError("field 'lut_domain' must be [-8, 8]")
    return MlpModel(tuple(topology), tuple(mats), fmt)


def load_cascade_json(data):
    """Parse a cascade file into an :class:`incam.facefilter.CascadeModel`."""
    from incam.facefilter import CONVENTION, CascadeModel, HaarFeature, Rect, Stage

    doc = _json(data)
    base = _field(doc, "base_window", "")
    if not isinstance(base, int) or base <= 0:
        raise ParseError("field 'base_window' must be a positive integer")
    conv = doc.get("convention", CONVENTION)
    if conv != CONVENTION:
        raise ParseError(f"field 'convention' must be {CONVENTION!r}, got {conv!r}")
    stages = []
    for si, s in enumerate(_field(doc, "stages", "")):
        where = f"stages[{si}]."
        feats = []
        for fi, f in enumerate(_field(s, "features", where)):
            fwhere = f"{where}features[{fi}]."
            rects = []
            for ri, r in enumerate(_field(f, "rects", fwhere)):
                rwhere = f"{fwhere}rects[{ri}]."
                vals = [_field(r, k, rwhere) for k in ("x", "y", "w", "h", "weight")]
                if not all(isinstance(v, int) for v in vals):
                    raise ParseError(f"field {rwhere}* must be integers")
                rects.append(Rect(*vals))
            try:
                feats.append(
                    HaarFeature(
                        tuple(rects),
                        float(_field(f, "threshold", fwhere)),
                        float(_field(f, "left", fwhere)),
                        float(_field(f, "right", fwhere)),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"field {fwhere}rects: {exc}") from exc
        stages.append(Stage(tuple(feats), float(_field(s, "threshold", where))))
    try:
        return CascadeModel(base, tuple(stages))
    except ValueError as exc:
        raise ParseError(f"field 'stages': {exc}") from exc
