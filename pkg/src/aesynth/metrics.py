"""Image quality metrics: resolution (FWHM), peak sidelobe level, and SNR.

Resolution and sidelobe metrics are measured on the envelope; SNR is
measured on the pre-envelope values.  Mixing the two changes results by
several dB, so the distinction is enforced by the call signatures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PixelGrid
from .errors import (
    AesynthError,
    NoPeakError,
    OneSidedProfileError,
    UndefinedSnrError,
    ValidationError,
)
from .reconstruct import BeamformedImage


@dataclass(frozen=True)
class Rect:
    """Axis-aligned region [x0, x1] x [z0, z1] in meters."""

    x0: float
    x1: float
    z0: float
    z1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.z1 < self.z0:
            raise ValidationError("rectangle bounds must be ordered")

    def overlaps(self, other: "Rect") -> bool:
        return (
            self.x0 < other.x1
            and other.x0 < self.x1
            and self.z0 < other.z1
            and other.z0 < self.z1
        )


@dataclass(frozen=True)
class TargetSpec:
    """An evaluation target: expected position plus signal and noise regions."""

    position: tuple[float, float]
    signal_roi: Rect
    noise_roi: Rect
    label: str = ""
    group: str | None = None

    def __post_init__(self):
        if self.signal_roi.overlaps(self.noise_roi):
            raise ValidationError(
                f"target {self.label!r}: signal and noise ROIs must be disjoint"
            )


@dataclass
class TargetMetrics:
    label: str
    group: str | None = None
    peak_x: float | None = None
    peak_z: float | None = None
    peak_value: float | None = None
    axial_fwhm: float | None = None
    lateral_fwhm: float | None = None
    psl_db: float | None = None
    snr_db: float | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    """Per-target metrics plus the image-level SNR (mean over defined targets)."""

    method: str
    targets: list[TargetMetrics] = field(default_factory=list)

    @property
    def snr_db(self) -> float:
        vals = [t.snr_db for t in self.targets if t.snr_db is not None]
        if not vals:
            return float("nan")
        return float(np.mean(vals))


def roi_slices(grid: PixelGrid, roi: Rect) -> tuple[slice, slice]:
    """Index slices of the pixels whose centers fall inside ``roi``."""
    xs = grid.x_coords()
    zs = grid.z_coords()
    ix = np.nonzero((xs >= roi.x0) & (xs <= roi.x1))[0]
    iz = np.nonzero((zs >= roi.z0) & (zs <= roi.z1))[0]
    if ix.size == 0 or iz.size == 0:
        raise ValidationError("ROI contains no grid pixels")
    return slice(iz[0], iz[-1] + 1), slice(ix[0], ix[-1] + 1)


def peak_pixel(image: BeamformedImage, roi: Rect) -> tuple[float, float, float]:
    """Position and value of the envelope maximum inside ``roi``.

    Ties resolve to the smallest depth, then the smallest lateral position.
    """
    if image.envelope is None:
        raise ValidationError("image has no envelope; run envelope() first")
    zsl, xsl = roi_slices(image.grid, roi)
    region = image.envelope[zsl, xsl]
    if not np.any(region > 0):
        raise NoPeakError("ROI contains no nonzero envelope values")
    # argmax on the row-major (z, x) layout realizes the tie rule directly
    iz, ix = np.unravel_index(np.argmax(region), region.shape)
    iz += zsl.start
    ix += xsl.start
    return (
        float(image.grid.x_coords()[ix]),
        float(image.grid.z_coords()[iz]),
        float(image.envelope[iz, ix]),
    )


def profile_fwhm(profile: np.ndarray, spacing: float) -> float:
    """Full width at half maximum of a 1D profile.

    The half-maximum crossings nearest the peak are located by linear
    interpolation between the bracketing samples.
    """
    p = np.asarray(profile, dtype=float)
    if p.ndim != 1 or p.size < 3:
        raise ValidationError("profile must be 1D with at least 3 samples")
    if not spacing > 0:
        raise ValidationError("spacing must be > 0")
    peak = int(np.argmax(p))
    pmax = p[peak]
    if not pmax > 0:
        raise NoPeakError("profile has no positive maximum")
    half = pmax / 2

    i = peak
    while i > 0 and p[i - 1] >= half:
        i -= 1
    if i == 0 and p[0] >= half:
        raise OneSidedProfileError("half maximum never crossed left of the peak")
    left = (i - 1) + (half - p[i - 1]) / (p[i] - p[i - 1])

    j = peak
    n = p.size
    while j < n - 1 and p[j + 1] >= half:
        j += 1
    if j == n - 1 and p[n - 1] >= half:
        raise OneSidedProfileError("half maximum never crossed right of the peak")
    right = j + (p[j] - half) / (p[j] - p[j + 1])

    return float((right - left) * spacing)


def peak_sidelobe_level(lateral_profile: np.ndarray) -> float:
    """Peak sidelobe level in dB relative to the main lobe.

    The main lobe is delimited by the first local minima flanking the peak
    (plateaus are walked through).  Returns ``-inf`` when no samples lie
    outside the main lobe or all of them are zero.
    """
    p = np.asarray(lateral_profile, dtype=float)
    if p.ndim != 1 or p.size < 3:
        raise ValidationError("profile must be 1D with at least 3 samples")
    peak = int(np.argmax(p))
    a_main = p[peak]
    if not a_main > 0:
        raise NoPeakError("profile has no positive main lobe")

    i = peak
    while i > 0 and p[i - 1] <= p[i]:
        i -= 1
    j = peak
    while j < p.size - 1 and p[j + 1] <= p[j]:
        j += 1

    outside = np.concatenate([p[:i], p[j + 1 :]])
    if outside.size == 0:
        return float("-inf")
    a_side = outside.max()
    if not a_side > 0:
        return float("-inf")
    return float(20 * np.log10(a_side / a_main))


def image_snr(image: BeamformedImage, signal_roi: Rect, noise_roi: Rect) -> float:
    """SNR in dB: mean squared signal-ROI value over noise-ROI variance.

    Both use the pre-envelope values and population (1/N) normalization; the
    noise variance is taken about the noise-ROI mean.
    """
    if signal_roi.overlaps(noise_roi):
        raise ValidationError("signal and noise ROIs must be disjoint")
    zsl, xsl = roi_slices(image.grid, signal_roi)
    x = image.values[zsl, xsl].ravel()
    zsl, xsl = roi_slices(image.grid, noise_roi)
    y = image.values[zsl, xsl].ravel()
    noise_var = float(np.mean((y - y.mean()) ** 2))
    if noise_var == 0:
        raise UndefinedSnrError("noise ROI has zero variance")
    signal_power = float(np.mean(x * x))
    if signal_power == 0:
        return float("-inf")
    return float(10 * np.log10(signal_power / noise_var))


def evaluate_targets(image: BeamformedImage, targets) -> MetricsReport:
    """Evaluate every target; per-target failures are recorded, not raised."""
    if image.envelope is None:
        raise ValidationError("image has no envelope; run envelope() first")
    report = MetricsReport(method=image.method)
    xs = image.grid.x_coords()
    zs = image.grid.z_coords()
    for t in targets:
        tm = TargetMetrics(label=t.label, group=t.group)
        report.targets.append(tm)
        errors = []
        try:
            px, pz, pv = peak_pixel(image, t.signal_roi)
            tm.peak_x, tm.peak_z, tm.peak_value = px, pz, pv
            ix = int(np.argmin(np.abs(xs - px)))
            iz = int(np.argmin(np.abs(zs - pz)))
            lateral = image.envelope[iz, :]
            axial = image.envelope[:, ix]
            for attr, fn in (
                ("lateral_fwhm", lambda: profile_fwhm(lateral, image.grid.dx)),
                ("axial_fwhm", lambda: profile_fwhm(axial, image.grid.dz)),
                ("psl_db", lambda: peak_sidelobe_level(lateral)),
                ("snr_db", lambda: image_snr(image, t.signal_roi, t.noise_roi)),
            ):
                try:
                    setattr(tm, attr, fn())
                except AesynthError as exc:
                    errors.append(f"{attr}: {type(exc).__name__}: {exc}")
        except AesynthError as exc:
            errors.append(f"peak: {type(exc).__name__}: {exc}")
        if errors:
            tm.error = "; ".join(errors)
    return report
