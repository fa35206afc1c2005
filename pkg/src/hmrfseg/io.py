"""File formats, blur preprocessing, and the Dice overlap metric.

Raw volume files: 8-byte magic "HMRFVOL1", three little-endian uint32 extents
(x, y, z), a little-endian uint32 element code (0 = uint8, 1 = float32
little-endian), then the payload in row-major order (z fastest).

Label map files: the same layout with magic "HMRFLBL1", element code 0,
uint8 labels, and one trailing little-endian uint32 holding the label count.
2D label fields are stored with a third extent of 1.

Images are binary portable pixmaps (P6, maxval 255) or graymaps (P5).
"""

from __future__ import annotations

import colorsys
import math
import struct

import numpy as np

__all__ = [
    "IoFormatError",
    "read_raw_volume",
    "write_raw_volume",
    "read_label_map",
    "write_label_map",
    "load_image",
    "load_color_image",
    "write_ppm",
    "color_table",
    "render_label_map",
    "labels_from_raster",
    "read_label_field",
    "gaussian_blur",
    "dice",
]

RAW_MAGIC = b"HMRFVOL1"
LABEL_MAGIC = b"HMRFLBL1"
ELEMENT_UINT8 = 0
ELEMENT_FLOAT32 = 1
_ELEMENT_DTYPES = {ELEMENT_UINT8: np.dtype("<u1"), ELEMENT_FLOAT32: np.dtype("<f4")}


class IoFormatError(Exception):
    """A file does not match its expected format; `offset` is the byte position."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


# ---------------------------------------------------------------------------
# raw volumes and label maps


def write_raw_volume(path, volume: np.ndarray, element: str = "float32"):
    """Write a 3D array; element "float32" stores values as-is (cast), while
    "uint8" quantizes by rounding and clipping to [0, 255]."""
    volume = np.asarray(volume)
    if volume.ndim != 3:
        raise ValueError(f"volume must be 3D, got shape {volume.shape}")
    if element == "float32":
        code, payload = ELEMENT_FLOAT32, volume.astype("<f4")
    elif element == "uint8":
        code, payload = ELEMENT_UINT8, np.clip(np.rint(volume), 0, 255).astype("<u1")
    else:
        raise ValueError(f"element must be 'float32' or 'uint8', got {element!r}")
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<3I", *volume.shape))
        fh.write(struct.pack("<I", code))
        fh.write(np.ascontiguousarray(payload).tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise IoFormatError(f"truncated file while reading {what}", offset=fh.tell())
    return data


def read_raw_volume(path) -> np.ndarray:
    """Read a raw volume; returns the stored dtype (uint8 or float32)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(RAW_MAGIC), "magic")
        if magic != RAW_MAGIC:
            raise IoFormatError(f"bad magic {magic!r}, expected {RAW_MAGIC!r}", offset=0)
        dims = struct.unpack("<3I", _read_exact(fh, 12, "extents"))
        (code,) = struct.unpack("<I", _read_exact(fh, 4, "element code"))
        if code not in _ELEMENT_DTYPES:
            raise IoFormatError(f"unknown element code {code}", offset=fh.tell() - 4)
        dtype = _ELEMENT_DTYPES[code]
        n = int(np.prod(dims))
        payload = _read_exact(fh, n * dtype.itemsize, "payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def write_label_map(path, labels: np.ndarray, n_labels: int):
    """Write a 2D or 3D label field as uint8 with a trailing label count."""
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels[:, :, None]
    if labels.ndim != 3:
        raise ValueError(f"labels must be 2D or 3D, got shape {labels.shape}")
    if not 2 <= n_labels <= 256:
        raise ValueError(f"n_labels must be in [2, 256], got {n_labels}")
    if labels.min() < 0 or labels.max() >= n_labels:
        raise ValueError("labels outside [0, n_labels)")
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<3I", *labels.shape))
        fh.write(struct.pack("<I", ELEMENT_UINT8))
        fh.write(np.ascontiguousarray(labels.astype("<u1")).tobytes())
        fh.write(struct.pack("<I", n_labels))


def read_label_map(path):
    """Read a label map; returns (labels with the stored 3D shape, n_labels)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(LABEL_MAGIC), "magic")
        if magic != LABEL_MAGIC:
            raise IoFormatError(f"bad magic {magic!r}, expected {LABEL_MAGIC!r}", offset=0)
        dims = struct.unpack("<3I", _read_exact(fh, 12, "extents"))
        (code,) = struct.unpack("<I", _read_exact(fh, 4, "element code"))
        if code != ELEMENT_UINT8:
            raise IoFormatError(f"label maps must be uint8, got code {code}", offset=fh.tell() - 4)
        n = int(np.prod(dims))
        payload = _read_exact(fh, n, "payload")
        (n_labels,) = struct.unpack("<I", _read_exact(fh, 4, "label count"))
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()
    if labels.size and labels.max() >= n_labels:
        raise IoFormatError(f"stored label {labels.max()} >= label count {n_labels}")
    return labels.astype(np.int64), int(n_labels)


# ---------------------------------------------------------------------------
# portable pixmaps


def _parse_pnm(data: bytes, path):
    """Parse binary P5/P6 bytes into (kind, uint8 array)."""
    pos = 0

    def skip_space(require_one: bool = False):
        nonlocal pos
        seen = 0
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch.isspace():
                pos += 1
                seen += 1
            elif ch == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
                seen += 1
            else:
                break
        if require_one and seen == 0:
            raise IoFormatError(f"{path}: expected whitespace", offset=pos)

    def read_int(what: str) -> int:
        nonlocal pos
        skip_space()
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise IoFormatError(f"{path}: expected integer for {what}", offset=pos)
        return int(data[start:pos])

    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise IoFormatError(f"{path}: not a binary PGM/PPM (magic {magic!r})", offset=0)
    pos = 2
    width = read_int("width")
    height = read_int("height")
    maxval = read_int("maxval")
    if maxval != 255:
        raise IoFormatError(f"{path}: only maxval 255 supported, got {maxval}", offset=pos)
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise IoFormatError(f"{path}: missing separator after maxval", offset=pos)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    payload = data[pos : pos + expected]
    if len(payload) != expected:
        raise IoFormatError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}",
            offset=pos + len(payload),
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        return magic, arr.reshape(height, width, 3).copy()
    return magic, arr.reshape(height, width).copy()


def load_image(path) -> np.ndarray:
    """Load a P6 raster as (H, W, 3) or a P5 raster as (H, W), float64 in [0, 255]."""
    with open(path, "rb") as fh:
        data = fh.read()
    _, arr = _parse_pnm(data, path)
    return arr.astype(float)


def load_color_image(path) -> np.ndarray:
    """Load a raster as (H, W, 3) float64 in [0, 255]; grayscale inputs get
    the gray value replicated into all three channels."""
    arr = load_image(path)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr


def write_ppm(path, array: np.ndarray):
    """Write uint8 (H, W, 3) as binary P6 or (H, W) as binary P5."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError(f"array must be uint8, got {array.dtype}")
    if array.ndim == 3 and array.shape[2] == 3:
        magic = b"P6"
        h, w = array.shape[:2]
    elif array.ndim == 2:
        magic = b"P5"
        h, w = array.shape
    else:
        raise ValueError(f"array must be (H, W, 3) or (H, W), got shape {array.shape}")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n" + f"{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(array).tobytes())


# ---------------------------------------------------------------------------
# label rendering

# hand-picked, visually distinct base palette; labels beyond it take
# golden-angle hues so any count up to 256 stays collision-free
_BASE_PALETTE = (
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
)


def color_table(n_labels: int) -> np.ndarray:
    """Fixed (n_labels, 3) uint8 table mapping label index to a distinct RGB."""
    if not 1 <= n_labels <= 256:
        raise ValueError(f"n_labels must be in [1, 256], got {n_labels}")
    rows = list(_BASE_PALETTE[:n_labels])
    idx = len(rows)
    while len(rows) < n_labels:
        hue = (idx * 0.6180339887498949) % 1.0
        sat = 0.9 - 0.35 * ((idx // 7) % 3) / 2.0
        val = 0.95 - 0.3 * ((idx // 3) % 4) / 3.0
        rgb = tuple(int(round(255 * c)) for c in colorsys.hsv_to_rgb(hue, sat, val))
        if rgb not in rows:
            rows.append(rgb)
        idx += 1
    return np.array(rows, dtype=np.uint8)


def render_label_map(labels: np.ndarray, n_labels: int | None = None) -> np.ndarray:
    """Turn a 2D label field into an indexed-color (H, W, 3) uint8 raster."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"expected a 2D label field, got shape {labels.shape}")
    if n_labels is None:
        n_labels = int(labels.max()) + 1
    return color_table(n_labels)[labels]


def labels_from_raster(image: np.ndarray) -> np.ndarray:
    """Invert `render_label_map` using the fixed color table."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) raster, got shape {image.shape}")
    table = color_table(256)
    lookup = {tuple(rgb): l for l, rgb in enumerate(table)}
    flat = image.reshape(-1, 3).astype(np.uint8)
    labels = np.empty(flat.shape[0], dtype=np.int64)
    cache: dict = {}
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    for u, rgb in enumerate(uniq):
        key = tuple(int(v) for v in rgb)
        if key not in lookup:
            raise IoFormatError(f"pixel color {key} is not in the label color table")
        cache[u] = lookup[key]
    labels = np.array([cache[u] for u in inverse], dtype=np.int64)
    return labels.reshape(image.shape[:2])


def read_label_field(path):
    """Read a label field from a label map or a rendered raster.

    Label map files are read directly; P6 rasters are inverted through the
    color table; P5 graymaps are taken as raw label values.  Returns
    (labels, n_labels).
    """
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == LABEL_MAGIC:
        return read_label_map(path)
    if head[:2] in (b"P5", b"P6"):
        with open(path, "rb") as fh:
            kind, arr = _parse_pnm(fh.read(), path)
        if kind == b"P6":
            labels = labels_from_raster(arr)
        else:
            labels = arr.astype(np.int64)
        return labels, int(labels.max()) + 1
    raise IoFormatError(f"{path}: not a label map or PGM/PPM raster", offset=0)


# ---------------------------------------------------------------------------
# preprocessing and evaluation


def gaussian_blur(image, sigma: float, radius: int | None = None) -> np.ndarray:
    """Separable Gaussian blur over the two spatial axes.

    The kernel exp(-t^2 / (2 sigma^2)) for t in [-radius, radius] is
    renormalized to sum 1; `radius` defaults to ceil(3 sigma).  Boundaries are
    mirror-extended (edge sample duplicated) before convolving and the result
    is cropped back, which conserves total intensity exactly.  Channels are
    blurred independently.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if radius is None:
        radius = math.ceil(3.0 * sigma)
    radius = int(radius)
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    arr = np.asarray(image, dtype=float)
    if arr.ndim not in (2, 3):
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {arr.shape}")
    taps = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-(taps**2) / (2.0 * sigma**2))
    kernel /= kernel.sum()

    out = arr
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="symmetric")
        acc = np.zeros_like(arr, dtype=float)
        for j, w in enumerate(kernel):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(j, j + arr.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return out


def dice(a: np.ndarray, b: np.ndarray, label: int = 1) -> float:
    """Overlap score 2|A∩B| / (|A|+|B|) of the sites carrying `label`.

    Defined as 1.0 when neither field contains the label at all.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"mismatched lattices: {a.shape} vs {b.shape}")
    in_a = a == label
    in_b = b == label
    denom = int(in_a.sum()) + int(in_b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(in_a & in_b)) / denom
