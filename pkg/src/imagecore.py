"""
Image representation, I/O and shared pixel utilities.

A RawImage is a uint8 array of shape (height, width, 3); a NormalizedImage is
the float64 array of the same shape with values in [0, 1].
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from numpy.typing import NDArray
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptImage,
    DimensionMismatch,
    ImageIoError,
    ImageNotFound,
    UnsupportedFormat,
)

logger = logging.getLogger(__name__)

RawImage = NDArray[np.uint8]
NormalizedImage = NDArray[np.float64]
PathLike = Union[str, Path]

STANDARD_SIZE = 256
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_NETPBM_CHANNELS = {b"P6": 3, b"P5": 1}


def check_raw(img: np.ndarray) -> RawImage:
    """Raise unless img is a non-empty (h, w, 3) uint8 array."""
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(
            f"expected uint8 (h, w, 3) image, got {img.dtype} {img.shape}"
        )
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionMismatch(f"empty image {img.shape}")
    return img


def to_uint8(values: np.ndarray) -> RawImage:
    """Round half away from zero, then clamp to [0, 255]."""
    rounded = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def _parse_netpbm(data: bytes) -> Tuple[int, int, int, int]:
    """Return (channels, width, height, data offset) of a binary PPM/PGM."""
    channels = _NETPBM_CHANNELS[data[:2]]
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch == b"#":
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise CorruptImage("malformed netpbm header")
        fields.append(int(data[start:pos]))

    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise CorruptImage("netpbm header not terminated")
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormat(f"only 8-bit netpbm is supported (maxval {maxval})")
    if width < 1 or height < 1:
        raise CorruptImage(f"invalid dimensions {width}x{height}")
    return channels, width, height, pos + 1


def load_image(path: PathLike) -> RawImage:
    """Decode a binary PPM (P6/P5) or, through Pillow, a PNG/JPEG file."""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFound(f"{path} does not exist")

    try:
        data = path.read_bytes()
    except OSError as e:
        raise ImageIoError(f"cannot read {path}: {e}") from e

    if data[:2] in _NETPBM_CHANNELS:
        channels, width, height, offset = _parse_netpbm(data)
        needed = width * height * channels
        body = data[offset : offset + needed]
        if len(body) < needed:
            raise CorruptImage(
                f"{path}: expected {needed} pixel bytes, found {len(body)}"
            )
        pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
        if channels == 1:
            pixels = np.repeat(pixels, 3, axis=2)
        return pixels.copy()

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except UnidentifiedImageError as e:
        raise UnsupportedFormat(f"{path}: unrecognised image format") from e
    except OSError as e:
        raise CorruptImage(f"{path}: {e}") from e


def save_image(img: RawImage, path: PathLike) -> None:
    """Write img as binary PPM, or via Pillow for other suffixes."""
    check_raw(img)
    path = Path(path)
    try:
        if path.suffix.lower() in ("", ".ppm"):
            height, width = img.shape[:2]
            header = f"P6\n{width} {height}\n255\n".encode("ascii")
            path.write_bytes(header + np.ascontiguousarray(img).tobytes())
        else:
            Image.fromarray(img, "RGB").save(path)
    except ValueError as e:
        raise UnsupportedFormat(f"cannot encode {path}: {e}") from e
    except OSError as e:
        raise ImageIoError(f"cannot write {path}: {e}") from e


def resize_bilinear(img: RawImage, width: int, height: int) -> RawImage:
    if img.shape[1] == width and img.shape[0] == height:
        return img
    resized = Image.fromarray(img, "RGB").resize(
        (width, height), Image.Resampling.BILINEAR
    )
    return np.asarray(resized, dtype=np.uint8).copy()


def standardize(img: RawImage) -> RawImage:
    """Scale the largest side to 256 and centre on a black 256x256 canvas."""
    check_raw(img)
    height, width = img.shape[:2]
    if height == STANDARD_SIZE and width == STANDARD_SIZE:
        return img

    longest = max(width, height)
    # integer round-half-up of side * 256 / longest
    new_w = max(1, (2 * width * STANDARD_SIZE + longest) // (2 * longest))
    new_h = max(1, (2 * height * STANDARD_SIZE + longest) // (2 * longest))
    content = resize_bilinear(img, new_w, new_h)

    canvas = np.zeros((STANDARD_SIZE, STANDARD_SIZE, 3), dtype=np.uint8)
    top = (STANDARD_SIZE - new_h) // 2
    left = (STANDARD_SIZE - new_w) // 2
    canvas[top : top + new_h, left : left + new_w] = content
    return canvas


def normalize(img: RawImage) -> NormalizedImage:
    return img.astype(np.float64) / 255.0


def to_grayscale(img: RawImage) -> RawImage:
    """BT.601 luma replicated across the three channels."""
    rgb = img.astype(np.float64)
    luma = (
        LUMA_WEIGHTS[0] * rgb[..., 0]
        + LUMA_WEIGHTS[1] * rgb[..., 1]
        + LUMA_WEIGHTS[2] * rgb[..., 2]
    )
    gray = to_uint8(luma)
    return np.repeat(gray[..., np.newaxis], 3, axis=2)


def invert(img: RawImage) -> RawImage:
    return 255 - img


def bilinear_sample(
    img: RawImage, xs: np.ndarray, ys: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sample img at real coordinates (xs, ys).

    Returns float64 samples of shape xs.shape + (3,) and a mask of the points
    that fall inside the pixel grid. Points outside the grid sample as zero.
    Coordinates within 1e-9 of an integer are snapped to it, so that exact
    rotations land on grid points.
    """
    height, width = img.shape[:2]
    xs = np.where(np.abs(xs - np.round(xs)) < 1e-9, np.round(xs), xs)
    ys = np.where(np.abs(ys - np.round(ys)) < 1e-9, np.round(ys), ys)
    inside = (xs >= 0) & (xs <= width - 1) & (ys >= 0) & (ys <= height - 1)

    xc = np.clip(xs, 0, width - 1)
    yc = np.clip(ys, 0, height - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (xc - x0)[..., np.newaxis]
    fy = (yc - y0)[..., np.newaxis]

    src = img.astype(np.float64)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    samples = top * (1 - fy) + bottom * fy
    samples[~inside] = 0.0
    return samples, inside


def center_crop_or_pad(img: np.ndarray, size: int) -> np.ndarray:
    """Centre-crop or zero-pad the spatial axes of an (h, w, c) array to size."""
    height, width = img.shape[:2]
    out = np.zeros((size, size) + img.shape[2:], dtype=img.dtype)

    src_top = max(0, (height - size) // 2)
    src_left = max(0, (width - size) // 2)
    dst_top = max(0, (size - height) // 2)
    dst_left = max(0, (size - width) // 2)
    rows = min(size, height)
    cols = min(size, width)
    out[dst_top : dst_top + rows, dst_left : dst_left + cols] = img[
        src_top : src_top + rows, src_left : src_left + cols
    ]
    return out
