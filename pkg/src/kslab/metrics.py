"""Reconstruction quality metrics: k-space NMSE and mean local SSIM.

NMSE is computed in k-space per item; test-set scores are the mean of the
per-item values. SSIM uses a uniform sliding window (length 7 in 1-D, 7x7
in 2-D), K1 = 0.01, K2 = 0.03, and dynamic range equal to the maximum over
both images, which keeps the score symmetric in its arguments.
"""

import numpy as np

from .errors import DimensionError, ValidationError
from .kspace import as_kspace

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def nmse(estimate, reference) -> float:
    """|| estimate - reference ||^2 / || reference ||^2."""
    est = as_kspace(estimate)
    ref = as_kspace(reference)
    if est.shape != ref.shape:
        raise DimensionError(f"length mismatch: {est.shape[0]} vs {ref.shape[0]}")
    denom = float(np.sum(np.abs(ref) ** 2))
    if denom == 0.0:
        raise ValidationError("reference vector has zero norm")
    return float(np.sum(np.abs(est - ref) ** 2)) / denom


def _windows(img: np.ndarray, w: int) -> np.ndarray:
    """All fully interior sliding windows, flattened per window."""
    if img.ndim == 1:
        n = img.shape[0] - w + 1
        return np.stack([img[i:i + w] for i in range(n)])
    nx, ny = img.shape
    out = []
    for i in range(nx - w + 1):
        for j in range(ny - w + 1):
            out.append(img[i:i + w, j:j + w].ravel())
    return np.stack(out)


def ssim(a, b) -> float:
    """Mean local structural similarity between two nonnegative images.

    Accepts 1-D signals or 2-D images of the same shape. For inputs smaller
    than the window, the window shrinks to the full extent.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim not in (1, 2):
        raise DimensionError("ssim expects a 1-D or 2-D real array")
    if np.any(a < 0) or np.any(b < 0):
        raise ValidationError("ssim expects nonnegative magnitude images")
    w = min(SSIM_WINDOW, min(a.shape))
    dyn = max(float(a.max()), float(b.max()))
    if dyn == 0.0:
        return 1.0  # both identically zero
    c1 = (SSIM_K1 * dyn) ** 2
    c2 = (SSIM_K2 * dyn) ** 2
    wa = _windows(a, w)
    wb = _windows(b, w)
    mu_a = wa.mean(axis=1)
    mu_b = wb.mean(axis=1)
    var_a = wa.var(axis=1)
    var_b = wb.var(axis=1)
    cov = ((wa - mu_a[:, None]) * (wb - mu_b[:, None])).mean(axis=1)
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(score.mean())


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and standard error of a sequence of scores."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("no values to aggregate")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / np.sqrt(arr.size))
