"""
Geometric augmentation: flipping, rotation and five-crop.
"""

from typing import List

import numpy as np

from .errors import DimensionMismatch
from .imagecore import RawImage, bilinear_sample, check_raw, to_uint8
from .models import CropParams, RotationParams


def flip_horizontal(img: RawImage) -> RawImage:
    """Mirror across the vertical axis."""
    return img[:, ::-1].copy()


def rotate(img: RawImage, params: RotationParams) -> RawImage:
    """
    Rotate about the pixel-grid centre by params.theta degrees counter-clockwise.

    Each destination pixel is mapped back through the inverse rotation and the
    source is sampled bilinearly. Destinations whose preimage lies outside the
    source are black. Output dimensions equal the input's.
    """
    check_raw(img)
    height, width = img.shape[:2]
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0

    theta = np.deg2rad(params.theta)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xs - cx
    dy = ys - cy
    # rows grow downwards, so a visual counter-clockwise turn flips the sin terms
    src_x = cx + cos_t * dx - sin_t * dy
    src_y = cy + sin_t * dx + cos_t * dy

    samples, _ = bilinear_sample(img, src_x, src_y)
    return to_uint8(samples)


def five_crop(img: RawImage, params: CropParams) -> List[RawImage]:
    """
    Crops in fixed order: top-left, top-right, bottom-left, bottom-right, centre.
    """
    check_raw(img)
    size = params.source_size
    if img.shape[0] != size or img.shape[1] != size:
        raise DimensionMismatch(
            f"five_crop expects a {size}x{size} image, got "
            f"{img.shape[1]}x{img.shape[0]}"
        )

    crop = params.crop_size
    far = size - crop
    mid = far // 2
    anchors = [(0, 0), (0, far), (far, 0), (far, far), (mid, mid)]
    return [img[top : top + crop, left : left + crop].copy() for top, left in anchors]
