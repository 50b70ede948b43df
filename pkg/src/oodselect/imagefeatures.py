"""Per-dataset image property features.

Everything is computed on a canonical RGB view (grayscale replicated to
three channels) in float64. Conventions that the tests pin down:

- GLCM: intensity quantized to `levels` gray levels via floor(g * levels / 256),
  offsets given as (dx, dy) column/row steps, counts symmetrized by adding
  the transpose, then normalized to sum 1 over all offsets together.
  energy is the sum of squared cell probabilities.
- Hu moments are computed on the Sobel gradient magnitude, x = column
  index and y = row index, and averaged over images.
- FFT block treats the DC-centered magnitude spectrum, normalized to sum 1,
  as a 2-D distribution and applies the co-occurrence-style formulas to it.
- Undefined ratios (0/0) yield the sentinel 0 and a diagnostic record.

Aggregation over images uses the population standard deviation (ddof=0).
"""

from __future__ import annotations

import numpy as np

from .images import ImageDataset, convert_channels

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

DEFAULT_GLCM_OFFSETS = ((1, 0), (0, 1))


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB->HSV for float arrays in [0, 1]; H, S, V all in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    s = np.where(maxc > 0.0, delta / np.where(maxc > 0.0, maxc, 1.0), 0.0)
    # hue sectors; delta == 0 means gray, hue 0 by convention
    safe = np.where(delta > 0.0, delta, 1.0)
    h = np.zeros_like(maxc)
    is_r = (maxc == r) & (delta > 0.0)
    is_g = (maxc == g) & (delta > 0.0) & ~is_r
    is_b = (delta > 0.0) & ~is_r & ~is_g
    h = np.where(is_r, ((g - b) / safe) % 6.0, h)
    h = np.where(is_g, (b - r) / safe + 2.0, h)
    h = np.where(is_b, (r - g) / safe + 4.0, h)
    return np.stack([h / 6.0, s, maxc], axis=-1)


def sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """Gradient magnitude of a (n, h, w) stack, edge-replicated 3x3 Sobel.

    Each gradient is the difference of two smoothed sums accumulated in the
    same order, so a constant image yields exactly zero instead of rounding
    dust (which would defeat the zero-mass handling downstream).
    """
    padded = np.pad(gray, ((0, 0), (1, 1), (1, 1)), mode="edge")
    h, w = gray.shape[1], gray.shape[2]

    def win(di: int, dj: int) -> np.ndarray:
        return padded[:, di : di + h, dj : dj + w]

    gx = (win(0, 2) + 2.0 * win(1, 2) + win(2, 2)) - (
        win(0, 0) + 2.0 * win(1, 0) + win(2, 0)
    )
    gy = (win(2, 0) + 2.0 * win(2, 1) + win(2, 2)) - (
        win(0, 0) + 2.0 * win(0, 1) + win(0, 2)
    )
    return np.sqrt(gx * gx + gy * gy)


def quantize_levels(gray: np.ndarray, levels: int) -> np.ndarray:
    """Map intensities in [0, 255] to integer levels 0..levels-1."""
    q = np.floor(gray * (levels / 256.0)).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def glcm(
    quantized: np.ndarray,
    levels: int,
    offsets: tuple[tuple[int, int], ...] = DEFAULT_GLCM_OFFSETS,
) -> np.ndarray:
    """Symmetric normalized co-occurrence matrix of one quantized image.

    Returns a (levels, levels) matrix summing to 1, or to 0 when no pixel
    pair fits any offset (degenerate tiny images).
    """
    h, w = quantized.shape
    counts = np.zeros((levels, levels), dtype=np.float64)
    for dx, dy in offsets:
        if dy >= h or dx >= w:
            continue
        a = quantized[: h - dy if dy else h, : w - dx if dx else w]
        b = quantized[dy:, dx:]
        codes = (a * levels + b).ravel()
        counts += np.bincount(codes, minlength=levels * levels).reshape(levels, levels)
    counts = counts + counts.T
    total = counts.sum()
    if total > 0.0:
        counts /= total
    return counts


def glcm_props(p: np.ndarray) -> dict[str, float | None]:
    """Scalar texture properties of a normalized GLCM. None marks 0/0 cases."""
    levels = p.shape[0]
    if p.sum() == 0.0:
        return {k: None for k in ("contrast", "dissimilarity", "homogeneity",
                                  "energy", "correlation", "entropy")}
    i, j = np.meshgrid(np.arange(levels), np.arange(levels), indexing="ij")
    diff = (i - j).astype(np.float64)
    out: dict[str, float | None] = {
        "contrast": float((p * diff**2).sum()),
        "dissimilarity": float((p * np.abs(diff)).sum()),
        "homogeneity": float((p / (1.0 + diff**2)).sum()),
        "energy": float((p * p).sum()),
    }
    mu_i = float((p * i).sum())
    mu_j = float((p * j).sum())
    var_i = float((p * (i - mu_i) ** 2).sum())
    var_j = float((p * (j - mu_j) ** 2).sum())
    if var_i > 0.0 and var_j > 0.0:
        out["correlation"] = float(
            (p * (i - mu_i) * (j - mu_j)).sum() / np.sqrt(var_i * var_j)
        )
    else:
        out["correlation"] = None
    pos = p[p > 0.0]
    out["entropy"] = float(-(pos * np.log(pos)).sum())
    return out


def hu_moments(image: np.ndarray) -> np.ndarray | None:
    """Seven rotation-invariant moments of a non-negative 2-D mass image.

    Returns None when the total mass is zero (normalization undefined).
    """
    m = np.asarray(image, dtype=np.float64)
    h, w = m.shape
    y = np.arange(h, dtype=np.float64)[:, None]
    x = np.arange(w, dtype=np.float64)[None, :]
    m00 = m.sum()
    if m00 == 0.0:
        return None
    xbar = (m * x).sum() / m00
    ybar = (m * y).sum() / m00
    dx = x - xbar
    dy = y - ybar

    def mu(p: int, q: int) -> float:
        return float((m * dx**p * dy**q).sum())

    def eta(p: int, q: int) -> float:
        return mu(p, q) / m00 ** (1.0 + (p + q) / 2.0)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    h1 = n20 + n02
    h2 = (n20 - n02) ** 2 + 4.0 * n11**2
    h3 = (n30 - 3.0 * n12) ** 2 + (3.0 * n21 - n03) ** 2
    h4 = (n30 + n12) ** 2 + (n21 + n03) ** 2
    h5 = (n30 - 3.0 * n12) * (n30 + n12) * (
        (n30 + n12) ** 2 - 3.0 * (n21 + n03) ** 2
    ) + (3.0 * n21 - n03) * (n21 + n03) * (3.0 * (n30 + n12) ** 2 - (n21 + n03) ** 2)
    h6 = (n20 - n02) * ((n30 + n12) ** 2 - (n21 + n03) ** 2) + 4.0 * n11 * (
        n30 + n12
    ) * (n21 + n03)
    h7 = (3.0 * n21 - n03) * (n30 + n12) * (
        (n30 + n12) ** 2 - 3.0 * (n21 + n03) ** 2
    ) - (n30 - 3.0 * n12) * (n21 + n03) * (3.0 * (n30 + n12) ** 2 - (n21 + n03) ** 2)
    return np.array([h1, h2, h3, h4, h5, h6, h7])


def fft_props(gray: np.ndarray) -> dict[str, float | None]:
    """Texture statistics of the centered, sum-normalized magnitude spectrum."""
    spectrum = np.abs(np.fft.fftshift(np.fft.fft2(gray)))
    total = spectrum.sum()
    keys = ("entropy", "inertia", "energy", "homogeneity")
    if total == 0.0:
        return {k: None for k in keys}
    q = spectrum / total
    i, j = np.meshgrid(np.arange(q.shape[0]), np.arange(q.shape[1]), indexing="ij")
    diff = (i - j).astype(np.float64)
    pos = q[q > 0.0]
    return {
        "entropy": float(-(pos * np.log(pos)).sum()),
        "inertia": float((q * diff**2).sum()),
        "energy": float((q * q).sum()),
        "homogeneity": float((q / (1.0 + diff**2)).sum()),
    }


IMAGE_FEATURE_NAMES: tuple[str, ...] = (
    "hsv_h_mean", "hsv_h_std", "hsv_s_mean", "hsv_s_std", "hsv_v_mean", "hsv_v_std",
    "intensity_std",
    "entropy_r", "entropy_g", "entropy_b",
    "hist_std_r", "hist_std_g", "hist_std_b",
    "hist_std_h", "hist_std_s", "hist_std_v", "hist_std_intensity",
    "sobel_white_fraction",
    "hu1", "hu2", "hu3", "hu4", "hu5", "hu6", "hu7",
    "glcm_contrast_mean", "glcm_contrast_std",
    "glcm_dissimilarity_mean", "glcm_dissimilarity_std",
    "glcm_homogeneity_mean", "glcm_homogeneity_std",
    "glcm_energy_mean", "glcm_energy_std",
    "glcm_correlation_mean", "glcm_correlation_std",
    "glcm_entropy_mean", "glcm_entropy_std",
    "fft_entropy_mean", "fft_entropy_std",
    "fft_inertia_mean", "fft_inertia_std",
    "fft_energy_mean", "fft_energy_std",
    "fft_homogeneity_mean", "fft_homogeneity_std",
)


def _hist_std(values: np.ndarray, bins: int, upper: float) -> float:
    density, _ = np.histogram(values, bins=bins, range=(0.0, upper))
    density = density / values.size
    return float(density.std())


def _channel_entropy(values: np.ndarray, bins: int) -> float:
    counts, _ = np.histogram(values, bins=bins, range=(0.0, 256.0))
    p = counts[counts > 0] / values.size
    return float(-(p * np.log(p)).sum())


def image_property_features(
    ds: ImageDataset,
    glcm_levels: int = 8,
    hist_bins: int = 32,
    sobel_white_threshold: float = 0.5,
    entropy_bins: int = 256,
    glcm_offsets: tuple[tuple[int, int], ...] = DEFAULT_GLCM_OFFSETS,
) -> tuple[np.ndarray, list[str]]:
    """The 45-value image block for one dataset, plus sentinel diagnostics.

    Returns (values aligned with IMAGE_FEATURE_NAMES, diagnostic strings).
    """
    rgb_u8 = convert_channels(ds.images, 3)
    rgb = rgb_u8.astype(np.float64)
    gray = rgb.mean(axis=3)  # intensity in [0, 255]
    hsv = rgb_to_hsv(rgb / 255.0)
    diagnostics: list[str] = []
    values: dict[str, float] = {}

    for k, name in enumerate(("h", "s", "v")):
        channel = hsv[..., k]
        values[f"hsv_{name}_mean"] = float(channel.mean())
        values[f"hsv_{name}_std"] = float(channel.std())
    values["intensity_std"] = float(gray.std())
    for k, name in enumerate(("r", "g", "b")):
        values[f"entropy_{name}"] = _channel_entropy(rgb[..., k], entropy_bins)
        values[f"hist_std_{name}"] = _hist_std(rgb[..., k], hist_bins, 256.0)
    for k, name in enumerate(("h", "s", "v")):
        values[f"hist_std_{name}"] = _hist_std(hsv[..., k], hist_bins, 1.0)
    values["hist_std_intensity"] = _hist_std(gray, hist_bins, 256.0)

    mag = sobel_magnitude(gray)
    per_image_max = mag.max(axis=(1, 2))
    thresholds = sobel_white_threshold * per_image_max
    white = (mag > thresholds[:, None, None]).mean(axis=(1, 2))
    values["sobel_white_fraction"] = float(white.mean())

    hu_rows = []
    hu_zero = 0
    for img_mag in mag:
        hu = hu_moments(img_mag)
        if hu is None:
            hu_zero += 1
            hu = np.zeros(7)
        hu_rows.append(hu)
    if hu_zero:
        diagnostics.append(f"hu: zero gradient mass on {hu_zero} images, sentinel 0")
    hu_mean = np.mean(hu_rows, axis=0)
    for k in range(7):
        values[f"hu{k + 1}"] = float(hu_mean[k])

    quantized = quantize_levels(gray, glcm_levels)
    glcm_keys = ("contrast", "dissimilarity", "homogeneity", "energy", "correlation", "entropy")
    per_key: dict[str, list[float]] = {k: [] for k in glcm_keys}
    sentinel_counts: dict[str, int] = {k: 0 for k in glcm_keys}
    for img_q in quantized:
        props = glcm_props(glcm(img_q, glcm_levels, glcm_offsets))
        for k in glcm_keys:
            v = props[k]
            if v is None:
                sentinel_counts[k] += 1
                v = 0.0
            per_key[k].append(v)
    for k in glcm_keys:
        if sentinel_counts[k]:
            diagnostics.append(
                f"glcm_{k}: undefined on {sentinel_counts[k]} images, sentinel 0"
            )
        arr = np.asarray(per_key[k])
        values[f"glcm_{k}_mean"] = float(arr.mean())
        values[f"glcm_{k}_std"] = float(arr.std())

    fft_keys = ("entropy", "inertia", "energy", "homogeneity")
    per_fft: dict[str, list[float]] = {k: [] for k in fft_keys}
    fft_sentinels: dict[str, int] = {k: 0 for k in fft_keys}
    for img_gray in gray:
        props = fft_props(img_gray)
        for k in fft_keys:
            v = props[k]
            if v is None:
                fft_sentinels[k] += 1
                v = 0.0
            per_fft[k].append(v)
    for k in fft_keys:
        if fft_sentinels[k]:
            diagnostics.append(
                f"fft_{k}: zero spectrum on {fft_sentinels[k]} images, sentinel 0"
            )
        arr = np.asarray(per_fft[k])
        values[f"fft_{k}_mean"] = float(arr.mean())
        values[f"fft_{k}_std"] = float(arr.std())

    vec = np.array([values[n] for n in IMAGE_FEATURE_NAMES])
    return vec, diagnostics
