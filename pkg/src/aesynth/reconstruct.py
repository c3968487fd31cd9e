"""Image formation.

Synthetic-aperture imaging is a pixel-oriented delay-and-sum over
single-element channels with a depth-proportional sub-aperture (fixed
F-number).  Focused-transmit imaging arranges each ray line's trace into an
image column, mapping time to depth at the medium speed of sound.  Envelope
detection takes the analytic-signal magnitude along depth.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import hilbert

from .core import ArrayGeometry, Medium, PixelGrid
from .errors import InvalidEventError, MethodMismatchError, ValidationError
from .forward import ChannelDataSet

METHOD_SA = "sa"
METHOD_FUS = "fus"


@dataclass(frozen=True, eq=False)
class BeamformedImage:
    """Reconstructed image: pre-envelope values plus optional envelope.

    ``values`` and ``envelope`` have shape (grid.nz, grid.nx).  ``coverage``
    counts, per pixel, how many channel samples actually contributed (SA) or
    marks filled columns (FUS).
    """

    grid: PixelGrid
    values: np.ndarray = field(repr=False)
    envelope: np.ndarray | None = field(default=None, repr=False)
    method: str = METHOD_SA
    f_number: float | None = None
    coverage: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.nz, self.grid.nx):
            raise ValidationError(
                f"values shape {v.shape} does not match grid ({self.grid.nz}, {self.grid.nx})"
            )
        object.__setattr__(self, "values", v)
        if self.envelope is not None:
            e = np.asarray(self.envelope, dtype=float)
            if e.shape != v.shape:
                raise ValidationError("envelope shape must match values")
            if np.any(e < 0):
                raise ValidationError("envelope must be nonnegative")
            object.__setattr__(self, "envelope", e)


@dataclass(frozen=True, eq=False)
class ApertureSamples:
    """Per-pixel delayed single-element samples retained for coherence maps.

    ``samples[iz, ix, i]`` is element i's channel sampled at pixel (ix, iz)'s
    arrival time (0 where unusable); ``member`` marks sub-aperture
    membership, ``valid`` additionally requires the sample time to lie within
    the recorded trace.  ``positions`` are fractional sample indices so
    pulse-length windows can be re-gathered from ``channels`` (one row per
    array element).
    """

    grid: PixelGrid
    samples: np.ndarray = field(repr=False)
    member: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    channels: np.ndarray = field(repr=False)

    @property
    def num_elements(self) -> int:
        return self.samples.shape[2]

    def valid_count(self) -> np.ndarray:
        """Per-pixel number of contributing elements (edge/support aware)."""
        return self.valid.sum(axis=2)


def sub_aperture_size(z: float, f_number: float, pitch: float, num_elements: int) -> int:
    """Element count covering the aperture z / f_number, clamped to [1, M]."""
    if not (z > 0 and f_number > 0 and pitch > 0):
        raise ValidationError("z, f_number and pitch must be > 0")
    m = int(np.floor(z / (f_number * pitch) + 0.5))
    return min(max(m, 1), num_elements)


def _window_bounds(m_sa: int, nearest: np.ndarray, num_elements: int):
    """Centered index window of nominal size ``m_sa``, truncated at the edges."""
    lo = np.maximum(nearest - (m_sa - 1) // 2, 0)
    hi = np.minimum(nearest + m_sa // 2, num_elements - 1)
    return lo, hi


def sub_aperture_elements(pixel, geometry: ArrayGeometry, f_number: float) -> np.ndarray:
    """Indices of the sub-aperture elements for one pixel.

    The window of ``sub_aperture_size`` elements is centered on the element
    nearest the pixel's lateral position and truncated (not shifted) at the
    array edges, so fewer elements contribute near the lateral borders.
    """
    x, z = pixel
    m_sa = sub_aperture_size(z, f_number, geometry.pitch, geometry.num_elements)
    k = geometry.nearest_element(x)
    lo, hi = _window_bounds(m_sa, np.asarray(k), geometry.num_elements)
    return np.arange(int(lo), int(hi) + 1)


def _gather(channels: np.ndarray, pos: np.ndarray):
    """Linear-interpolated samples ``channels[i, pos[..., i]]`` with a support mask."""
    n = channels.shape[1]
    if n < 2:
        raise ValidationError("channel traces must have at least 2 samples")
    support = (pos >= 0) & (pos <= n - 1)
    k0 = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
    frac = pos - k0
    idx = np.arange(channels.shape[0])
    idx = idx.reshape((1,) * (pos.ndim - 1) + (-1,))
    v = channels[idx, k0] * (1 - frac) + channels[idx, k0 + 1] * frac
    return np.where(support, v, 0.0), support


def das_sa(
    data: ChannelDataSet,
    grid: PixelGrid,
    f_number: float,
    threads: int = 1,
) -> tuple[BeamformedImage, ApertureSamples]:
    """Delay-and-sum reconstruction of single-element channel data.

    For each pixel, every sub-aperture element's channel is sampled (linear
    interpolation) at that element's time of flight to the pixel and the
    samples are summed in ascending element order.  Samples outside the
    recorded trace contribute zero and are excluded from the valid count.
    """
    geometry = data.geometry
    m = geometry.num_elements
    elem_x = geometry.element_positions()

    # Map element index -> channel row; every event must be single-element.
    chan_of_elem = np.full(m, -1, dtype=np.int64)
    elem_delay = np.zeros(m)
    for row, ev in enumerate(data.events):
        i = ev.single_element_index()
        if chan_of_elem[i] >= 0:
            raise InvalidEventError(f"element {i} transmitted in more than one event")
        chan_of_elem[i] = row
        elem_delay[i] = ev.delays[i]
    has_channel = chan_of_elem >= 0
    channels = np.zeros((m, data.num_samples))
    channels[has_channel] = data.channels[chan_of_elem[has_channel]]

    xs = grid.x_coords()
    zs = grid.z_coords()
    c = data.medium.sos
    fs = data.sample_rate
    nearest = np.array([geometry.nearest_element(x) for x in xs])

    values = np.zeros((grid.nz, grid.nx))
    samples = np.zeros((grid.nz, grid.nx, m))
    member = np.zeros((grid.nz, grid.nx, m), dtype=bool)
    valid = np.zeros((grid.nz, grid.nx, m), dtype=bool)
    positions = np.full((grid.nz, grid.nx, m), -1.0)
    elem_ids = np.arange(m)

    def do_rows(rows):
        for iz in rows:
            z = zs[iz]
            m_sa = sub_aperture_size(z, f_number, geometry.pitch, m)
            lo, hi = _window_bounds(m_sa, nearest, m)
            row_member = (
                (elem_ids[None, :] >= lo[:, None])
                & (elem_ids[None, :] <= hi[:, None])
                & has_channel[None, :]
            )
            tau = elem_delay[None, :] + np.hypot(xs[:, None] - elem_x[None, :], z) / c
            pos = (tau - data.t0) * fs
            vals, support = _gather(channels, pos)
            row_valid = row_member & support
            vals = np.where(row_valid, vals, 0.0)
            values[iz] = vals.sum(axis=1)
            samples[iz] = vals
            member[iz] = row_member
            valid[iz] = row_valid
            positions[iz] = pos

    _run_rows(do_rows, grid.nz, threads)

    aperture = ApertureSamples(
        grid=grid,
        samples=samples,
        member=member,
        valid=valid,
        positions=positions,
        channels=channels,
    )
    image = BeamformedImage(
        grid=grid,
        values=values,
        method=METHOD_SA,
        f_number=f_number,
        coverage=valid.sum(axis=2),
    )
    return image, aperture


def _run_rows(fn, nz: int, threads: int) -> None:
    """Run ``fn`` over depth-row chunks, optionally on a thread pool.

    Each row is computed independently and written to its own output slice,
    so results are bitwise identical for any thread count.
    """
    if threads <= 1 or nz == 1:
        fn(range(nz))
        return
    chunks = np.array_split(np.arange(nz), min(threads, nz))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, chunks))


def fus_line_map(
    data: ChannelDataSet, grid: PixelGrid, medium: Medium
) -> BeamformedImage:
    """Arrange focused-transmit ray lines into an image.

    Each event's trace becomes the grid column nearest its line center, with
    time mapped to depth as ``z = c * (t - t_ref)``.  ``t_ref`` is the
    event's largest transmit delay: with the focusing delay law it is the
    moment the converging wavefront crosses the array plane on the beam
    axis, so the focal arrival lands at the focal depth.  Line centers are
    taken as the position of the most-delayed element (line centers are
    assumed to coincide with element positions).  Columns with no line stay
    zero and are flagged in ``coverage``.
    """
    geometry = data.geometry
    elem_x = geometry.element_positions()
    for ev in data.events:
        if ev.num_active < 2:
            raise MethodMismatchError(
                "line mapping requires focused (multi-element) events; "
                f"event {ev.label!r} has {ev.num_active} active element(s)"
            )

    xs = grid.x_coords()
    zs = grid.z_coords()
    fs = data.sample_rate
    values = np.zeros((grid.nz, grid.nx))
    filled = np.zeros(grid.nx, dtype=bool)
    # Column -> (distance to its line center, event index); closest line wins.
    best = np.full(grid.nx, np.inf)

    for row, ev in enumerate(data.events):
        delays = np.where(ev.active, ev.delays, -np.inf)
        k = int(np.argmax(delays))
        line_x = elem_x[k]
        t_ref = float(delays[k])
        cc = (line_x - grid.origin[0]) / grid.dx
        col = int(np.ceil(cc - 0.5))
        if col < 0 or col >= grid.nx:
            continue
        dist = abs(line_x - xs[col])
        if dist >= best[col]:
            continue
        best[col] = dist
        pos = (t_ref + zs / medium.sos - data.t0) * fs
        trace = data.channels[row]
        col_vals, support = _gather(trace[None, :], pos[:, None])
        values[:, col] = col_vals[:, 0]
        filled[col] = True

    coverage = np.broadcast_to(filled, (grid.nz, grid.nx)).copy()
    return BeamformedImage(
        grid=grid, values=values, method=METHOD_FUS, coverage=coverage
    )


def envelope(image: BeamformedImage) -> BeamformedImage:
    """Fill the envelope: analytic-signal magnitude along the depth axis."""
    if image.grid.nz < 4:
        raise ValidationError("envelope requires at least 4 depth samples")
    env = np.abs(hilbert(image.values, axis=0))
    return replace(image, envelope=env)
