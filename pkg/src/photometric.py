"""
Photometric augmentation: set colour jitter, edge enhancement and fancy PCA.
"""

import logging
from typing import Literal

import numpy as np

from .errors import DegenerateImage
from .imagecore import RawImage, check_raw, invert, to_grayscale, to_uint8
from .models import AlphaDraw, FancyPcaBasis, JitterParams

logger = logging.getLogger(__name__)

DEFAULT_PCA_SCALE = 5e6
DEFAULT_ALPHA_STD = 0.1


def rgb_to_hsb(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSB on [0, 1] floats; hue is a fraction of the circle."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc

    saturation = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    hue = np.where(
        r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc)
    )
    hue = np.where(delta > 0, (hue / 6.0) % 1.0, 0.0)
    return np.stack([hue, saturation, maxc], axis=-1)


def hsb_to_rgb(hsb: np.ndarray) -> np.ndarray:
    h, s, v = hsb[..., 0], hsb[..., 1], hsb[..., 2]
    sector = np.floor(h * 6.0)
    f = h * 6.0 - sector
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = sector.astype(np.intp) % 6

    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def color_jitter(img: RawImage, params: JitterParams) -> RawImage:
    """Shift hue (modulo 1) and clamp-shift saturation and brightness."""
    check_raw(img)
    hsb = rgb_to_hsb(img.astype(np.float64) / 255.0)
    hsb[..., 0] = (hsb[..., 0] + params.delta_hue) % 1.0
    hsb[..., 1] = np.clip(hsb[..., 1] + params.delta_saturation, 0.0, 1.0)
    hsb[..., 2] = np.clip(hsb[..., 2] + params.delta_brightness, 0.0, 1.0)
    return to_uint8(hsb_to_rgb(hsb) * 255.0)


def sobel_gradient(img: RawImage) -> RawImage:
    """Per-channel Sobel gradient magnitude with replicate-edge padding."""
    check_raw(img)
    p = np.pad(img.astype(np.float64), ((1, 1), (1, 1), (0, 0)), mode="edge")

    left = p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
    right = p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
    top = p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
    bottom = p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]

    gx = right - left
    gy = bottom - top
    return to_uint8(np.sqrt(gx * gx + gy * gy))


def edge_enhance(img: RawImage) -> RawImage:
    """Composite the inverted grayscale edge map over img at 50% alpha."""
    overlay = invert(to_grayscale(sobel_gradient(img)))
    blended = (img.astype(np.float64) + overlay.astype(np.float64)) / 2.0
    return to_uint8(blended)


def compute_pca_basis(
    img: RawImage,
    scale: float = DEFAULT_PCA_SCALE,
    eigenvalues: Literal["covariance", "scatter"] = "covariance",
) -> FancyPcaBasis:
    """
    Principal components of the image's RGB pixel cloud.

    The N x 3 pixel matrix is mean-centred and decomposed by SVD. With
    ``eigenvalues="covariance"`` the returned values are those of
    M^T M / (N - 1); ``"scatter"`` returns those of M^T M itself.
    Each eigenvector is signed so its largest-magnitude component is
    non-negative.
    """
    check_raw(img)
    pixels = img.reshape(-1, 3).astype(np.float64)
    n = pixels.shape[0]
    if n < 3:
        raise DegenerateImage(f"PCA needs at least 3 pixels, got {n}")

    centred = pixels - pixels.mean(axis=0)
    _, singular, vt = np.linalg.svd(centred, full_matrices=False)
    values = singular**2
    if eigenvalues == "covariance":
        values = values / (n - 1)

    vectors = vt.T.copy()
    for col in range(3):
        lead = np.argmax(np.abs(vectors[:, col]))
        if vectors[lead, col] < 0:
            vectors[:, col] = -vectors[:, col]

    return FancyPcaBasis(eigenvectors=vectors, eigenvalues=values, scale=scale)


def draw_alphas(rng: np.random.Generator, std: float = DEFAULT_ALPHA_STD) -> AlphaDraw:
    return AlphaDraw(alphas=rng.normal(0.0, std, size=3).tolist())


def pca_offset(basis: FancyPcaBasis, draw: AlphaDraw) -> np.ndarray:
    weighted = np.asarray(draw.alphas, dtype=np.float64) * basis.eigenvalues
    return basis.eigenvectors @ weighted / basis.scale


def fancy_pca(img: RawImage, basis: FancyPcaBasis, draw: AlphaDraw) -> RawImage:
    """Add the same principal-component offset to every pixel."""
    check_raw(img)
    offset = pca_offset(basis, draw)
    logger.debug(f"fancy PCA offset {offset}")
    return to_uint8(img.astype(np.float64) + offset)
