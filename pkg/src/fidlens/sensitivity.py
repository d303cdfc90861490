"""Per-image sensitivity heatmaps for the Frechet distance.

Pipeline for one image: the gradient of the distance with respect to the
image's pooled feature vector is spread uniformly over the spatial grid
(the pooled features are spatial averages of the activation maps), squared
and averaged into one importance weight per channel, combined linearly
with the activation maps into a low-resolution signed map, and Lanczos
upsampled to image resolution.  No rectification is applied anywhere, so
both positive and negative influence survive into the heatmap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDataError, PreconditionError, ValidationError
from .frechet import fid_grad_sample
from .stats import GaussianStats

__all__ = [
    "Heatmap",
    "importance_weights",
    "sensitivity_map",
    "heatmap_for_image",
    "lanczos_upsample",
    "importance_masks",
    "add_masked_noise",
    "render_heatmap",
]

LANCZOS_A = 3


@dataclass(frozen=True)
class Heatmap:
    """Image-resolution sensitivity values plus the low-res map they came from."""

    values: np.ndarray
    source_map: np.ndarray


def importance_weights(spatial_grad) -> np.ndarray:
    """Per-channel mean of squared gradient entries.

    ``spatial_grad`` holds the gradient of the distance with respect to
    each spatial activation, shape (channels, s, s).  When the gradient
    comes from pooled features each channel's grid is uniform with value
    g_k / s^2 and the weight reduces to g_k^2 / s^4.
    """
    grad = np.asarray(spatial_grad, dtype=np.float64)
    if grad.ndim != 3:
        raise PreconditionError(f"spatial gradient must be (channels, s, s), got {grad.shape}")
    if not np.isfinite(grad).all():
        raise InvalidDataError("spatial gradient contains non-finite entries")
    return np.mean(np.abs(grad) ** 2, axis=(1, 2))


def sensitivity_map(activations, alpha) -> np.ndarray:
    """Signed linear combination of activation maps: sum_k alpha_k A^k.

    Deliberately unrectified; negative contributions are kept.
    """
    acts = np.asarray(activations, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    if acts.ndim != 3:
        raise PreconditionError(f"activations must be (channels, s, s), got {acts.shape}")
    if a.shape != (acts.shape[0],):
        raise PreconditionError(
            f"alpha must have {acts.shape[0]} entries to match the channels, got {a.shape}"
        )
    return np.tensordot(a, acts, axes=1)


def _lanczos_kernel(t: np.ndarray) -> np.ndarray:
    out = np.sinc(t) * np.sinc(t / LANCZOS_A)
    out[np.abs(t) >= LANCZOS_A] = 0.0
    return out


def _resample_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) row-stochastic Lanczos weight matrix, edge-clamped."""
    scale = src / dst
    # Pixel-center alignment: output center x maps to (x + 0.5) * scale - 0.5.
    centers = (np.arange(dst) + 0.5) * scale - 0.5
    base = np.floor(centers).astype(int)
    offsets = np.arange(-LANCZOS_A + 1, LANCZOS_A + 1)
    taps = base[:, None] + offsets[None, :]
    weights = _lanczos_kernel(taps - centers[:, None])
    weights /= weights.sum(axis=1, keepdims=True)
    taps = np.clip(taps, 0, src - 1)

    matrix = np.zeros((dst, src))
    rows = np.repeat(np.arange(dst), offsets.size)
    np.add.at(matrix, (rows, taps.ravel()), weights.ravel())
    return matrix


def lanczos_upsample(importance_map, target_h: int, target_w: int) -> Heatmap:
    """Separable Lanczos-3 upsampling with per-pixel weight renormalization.

    Renormalization makes constant maps upsample to the same constant;
    source coordinates are clamped at the edges.  Downsampling is out of
    scope: the target must be at least the source size in each axis.
    """
    grid = np.asarray(importance_map, dtype=np.float64)
    if grid.ndim != 2:
        raise PreconditionError(f"importance map must be 2-D, got shape {grid.shape}")
    h, w = grid.shape
    if target_h < h or target_w < w:
        raise PreconditionError(
            f"target {target_h}x{target_w} is smaller than the source {h}x{w}"
        )
    rows = _resample_weights(h, target_h)
    cols = _resample_weights(w, target_w)
    return Heatmap(values=rows @ grid @ cols.T, source_map=grid)


def heatmap_for_image(
    real: GaussianStats,
    gen_base: GaussianStats,
    features,
    activations,
    new_count: int,
    target_h: int,
    target_w: int,
) -> Heatmap:
    """Full sensitivity heatmap for a single image.

    ``features`` is the image's pooled feature vector, ``activations`` the
    matching (channels, s, s) tensor whose spatial averages must reproduce
    the features.  ``gen_base`` summarizes the generated set without this
    image and ``new_count`` is the set size once it is added.
    """
    f = np.asarray(features, dtype=np.float64)
    acts = np.asarray(activations, dtype=np.float64)
    if acts.ndim != 3 or acts.shape[1] != acts.shape[2]:
        raise PreconditionError(f"activations must be (channels, s, s), got {acts.shape}")
    if f.shape != (acts.shape[0],):
        raise PreconditionError(
            f"features must have {acts.shape[0]} entries to match the activations"
        )
    pooled = acts.mean(axis=(1, 2))
    scale = max(float(np.abs(f).max()), 1e-12)
    if np.abs(pooled - f).max() > 1e-5 * scale:
        raise ValidationError(
            "activation spatial averages disagree with the feature vector",
            block="activations",
        )

    s = acts.shape[1]
    grad = fid_grad_sample(real, gen_base, f, new_count)
    spatial_grad = np.broadcast_to((grad / (s * s))[:, None, None], acts.shape)
    alpha = importance_weights(spatial_grad)
    return lanczos_upsample(sensitivity_map(acts, alpha), target_h, target_w)


def importance_masks(heatmap_values) -> tuple[np.ndarray, np.ndarray]:
    """Split the pixels into equal important / unimportant halves by |value|.

    The important half holds the pixels with the largest absolute values;
    ties are broken in row-major order.  For an odd pixel count the
    important mask gets the extra pixel.  The two masks partition the
    image.
    """
    values = np.asarray(heatmap_values, dtype=np.float64)
    if values.ndim != 2:
        raise PreconditionError(f"heatmap must be 2-D, got shape {values.shape}")
    flat = np.abs(values).ravel()
    order = np.argsort(-flat, kind="stable")
    n_important = flat.size - flat.size // 2
    important = np.zeros(flat.size, dtype=bool)
    important[order[:n_important]] = True
    important = important.reshape(values.shape)
    return important, ~important


def add_masked_noise(image, mask, sigma: float, seed: int) -> np.ndarray:
    """Add independent Gaussian noise to the masked pixels of an image in [0, 1].

    The noise field is drawn for the full image shape so that the values
    landing on a given pixel depend only on the seed, then zeroed outside
    the mask and the result clipped back to [0, 1].
    """
    img = np.asarray(image, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if img.ndim != 3 or img.shape[2] != 3:
        raise PreconditionError(f"image must be (H, W, 3), got shape {img.shape}")
    if m.shape != img.shape[:2]:
        raise PreconditionError(
            f"mask shape {m.shape} does not match the image {img.shape[:2]}"
        )
    if sigma < 0:
        raise PreconditionError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0 or not m.any():
        return img.copy()
    noise = np.random.default_rng(seed).standard_normal(img.shape) * sigma
    noise[~m] = 0.0
    return np.clip(img + noise, 0.0, 1.0)


# Diverging endpoints (blue for negative, red for positive influence).
_NEG_COLOR = np.array([59.0, 76.0, 192.0])
_POS_COLOR = np.array([180.0, 4.0, 38.0])
_MID_COLOR = np.array([255.0, 255.0, 255.0])


def render_heatmap(heatmap_values, percentile: float = 99.0) -> np.ndarray:
    """Map signed heatmap values to an 8-bit RGB image.

    Symmetric diverging colors around zero; the color range is set by the
    given percentile of |values| so isolated spikes do not wash out the map.
    """
    values = np.asarray(heatmap_values, dtype=np.float64)
    vmax = float(np.percentile(np.abs(values), percentile))
    if vmax <= 0:
        vmax = 1.0
    t = np.clip(values / vmax, -1.0, 1.0)
    mag = np.abs(t)[..., None]
    endpoint = np.where(t[..., None] >= 0, _POS_COLOR, _NEG_COLOR)
    rgb = (1.0 - mag) * _MID_COLOR + mag * endpoint
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
