"""Forward simulation of acoustoelectric voltage channels.

Each transmit event superposes delayed spherical waves from its active
elements over a gridded source field.  The recorded voltage is the
source-weighted sum of pulse arrivals:

    V(t) = -C * sum_cells s(x) * sum_i b_i(x) * a(t - delay_i - |x - x_i| / c)

with C = k_i * p0 * cell_area unless an explicit amplitude scale is given.
Sub-sample arrival times are rendered by two-tap linear interpolation of a
spike train that is convolved with the sampled pulse waveform.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionSpec, differential_subtract, matched_filter
from .core import ArrayGeometry, Medium, PulseSpec, SFieldGrid
from .errors import InvalidEventError, ValidationError

DECAY_MODES = ("none", "inverse_sqrt", "inverse")
DIRECTIVITY_MODES = ("omni", "cosine")


@dataclass(frozen=True, eq=False)
class TransmitEvent:
    """One transmission: per-element delays and an active mask.

    ``delays`` has one entry per array element; entries for inactive elements
    are ignored (kept as 0).  Delays are nonnegative and at least one element
    is active.
    """

    delays: np.ndarray = field(repr=False)
    active: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        a = np.asarray(self.active, dtype=bool)
        if d.ndim != 1 or a.shape != d.shape:
            raise InvalidEventError("delays and active mask must be 1D and equal length")
        if not a.any():
            raise InvalidEventError("event must have at least one active element")
        if np.any(d[a] < 0):
            raise InvalidEventError("active-element delays must be >= 0")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "active", a)

    @property
    def num_active(self) -> int:
        return int(self.active.sum())

    def single_element_index(self) -> int:
        """Index of the only active element; error if more than one."""
        idx = np.flatnonzero(self.active)
        if idx.size != 1:
            raise InvalidEventError(f"event {self.label!r} is not single-element")
        return int(idx[0])


@dataclass(frozen=True)
class PressureModel:
    """Per-element beam amplitude model.

    ``decay`` sets the amplitude falloff with distance r: constant,
    1/sqrt(r) (2D cylindrical spreading) or 1/r; ``r_min`` clamps the
    singularity.  ``directivity`` optionally applies a cos(theta) factor
    about the element normal (+z).
    """

    decay: str = "none"
    r_min: float = 1e-4
    directivity: str = "omni"

    def __post_init__(self):
        if self.decay not in DECAY_MODES:
            raise ValidationError(f"decay must be one of {DECAY_MODES}")
        if self.directivity not in DIRECTIVITY_MODES:
            raise ValidationError(f"directivity must be one of {DIRECTIVITY_MODES}")
        if not self.r_min > 0:
            raise ValidationError("r_min must be > 0")


@dataclass(frozen=True, eq=False)
class ChannelDataSet:
    """Recorded voltage traces for a sequence of transmit events.

    ``channels`` has shape (M_tx, T); row m is the conditioned trace for
    ``events[m]``.  ``t0`` is the time of the first sample.
    """

    channels: np.ndarray = field(repr=False)
    sample_rate: float
    t0: float
    events: tuple[TransmitEvent, ...]
    geometry: ArrayGeometry = None
    medium: Medium = None
    pulse: PulseSpec = None

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=float)
        if ch.ndim != 2:
            raise ValidationError("channels must be 2D (events x samples)")
        if ch.shape[0] != len(self.events):
            raise ValidationError("one channel row per transmit event required")
        if not np.all(np.isfinite(ch)):
            raise ValidationError("channel samples must be finite")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def num_events(self) -> int:
        return self.channels.shape[0]

    @property
    def num_samples(self) -> int:
        return self.channels.shape[1]


def time_of_flight(source, target, sos: float) -> float:
    """Euclidean distance between two (x, z) points divided by the speed of sound."""
    if not sos > 0:
        raise ValidationError("sos must be > 0")
    sx, sz = source
    tx, tz = target
    return float(np.hypot(tx - sx, tz - sz)) / sos


def trace_length(max_depth: float, medium: Medium, pulse: PulseSpec) -> int:
    """Number of samples covering one-way propagation to ``max_depth`` plus the pulse."""
    if not max_depth > 0:
        raise ValidationError("max_depth must be > 0")
    return int(np.ceil(max_depth / medium.sos * pulse.sample_rate)) + pulse.length_samples


def pulse_waveform(pulse: PulseSpec) -> np.ndarray:
    """Sampled pulse a(t) centered on its middle sample, peak amplitude 1.

    Impulse: a single unit sample.  Tone: ``num_cycles`` cycles of a cosine
    under a Hann window; the odd sample count puts the window center (and the
    amplitude peak) exactly on a sample.
    """
    if pulse.kind == "impulse":
        return np.ones(1)
    n = pulse.length_samples
    t = (np.arange(n) - (n - 1) / 2) / pulse.sample_rate
    duration = pulse.num_cycles / pulse.center_frequency
    window = np.where(
        np.abs(t) <= duration / 2, 0.5 * (1 + np.cos(2 * np.pi * t / duration)), 0.0
    )
    return np.cos(2 * np.pi * pulse.center_frequency * t) * window


def pulse_center_index(pulse: PulseSpec) -> int:
    return (pulse.length_samples - 1) // 2


def element_beam_amplitude(
    geometry: ArrayGeometry, element_index: int, point, model: PressureModel
) -> float:
    """Beam amplitude of one element at an (x, z) point under ``model``."""
    x, z = point
    ex = geometry.element_positions()[element_index]
    amps = _element_amplitudes(
        np.asarray([ex]), np.asarray([float(x)]), np.asarray([float(z)]), model
    )
    return float(amps[0, 0])


def _element_amplitudes(
    elem_x: np.ndarray, px: np.ndarray, pz: np.ndarray, model: PressureModel
) -> np.ndarray:
    """Amplitudes of elements (E,) at points (N,), returned as (E, N)."""
    dx = px[None, :] - elem_x[:, None]
    r = np.hypot(dx, pz[None, :])
    rc = np.maximum(r, model.r_min)
    if model.decay == "none":
        amp = np.ones_like(r)
    elif model.decay == "inverse_sqrt":
        amp = np.sqrt(model.r_min / rc)
    else:
        amp = model.r_min / rc
    if model.directivity == "cosine":
        cos_t = np.where(r > 0, pz[None, :] / np.maximum(r, 1e-300), 1.0)
        amp = amp * cos_t
    return amp


def single_element_sequence(geometry: ArrayGeometry) -> list[TransmitEvent]:
    """One zero-delay event per element, element i alone active in event i."""
    events = []
    m = geometry.num_elements
    for i in range(m):
        active = np.zeros(m, dtype=bool)
        active[i] = True
        events.append(TransmitEvent(delays=np.zeros(m), active=active, label=f"sa:{i}"))
    return events


def focused_sequence(
    geometry: ArrayGeometry,
    medium: Medium,
    focal_depth: float,
    line_centers,
) -> list[TransmitEvent]:
    """Full-aperture focused transmissions, one per line center.

    Element delays equalize the time of flight to the focus
    (x_line, focal_depth): ``delay_i = (max_j d_j - d_i) / c`` so the
    farthest element fires first and the minimum delay is 0.
    """
    if not focal_depth > 0:
        raise ValidationError("focal_depth must be > 0")
    ex = geometry.element_positions()
    events = []
    for x_line in np.atleast_1d(np.asarray(line_centers, dtype=float)):
        d = np.hypot(ex - x_line, focal_depth)
        delays = (d.max() - d) / medium.sos
        events.append(
            TransmitEvent(
                delays=delays,
                active=np.ones(geometry.num_elements, dtype=bool),
                label=f"fus:x={x_line:.6e}",
            )
        )
    return events


def simulate_channel(
    s_field: SFieldGrid,
    event: TransmitEvent,
    geometry: ArrayGeometry,
    medium: Medium,
    pulse: PulseSpec,
    model: PressureModel,
    n_samples: int,
    amplitude_scale: float | None = None,
) -> np.ndarray:
    """Noise-free voltage trace (length ``n_samples``) for one transmit event.

    ``amplitude_scale`` overrides the physical constant ``k_i * p0 *
    cell_area`` when a normalized amplitude unit is more convenient.
    """
    if event.delays.size != geometry.num_elements:
        raise InvalidEventError("event delay table does not match the array size")
    waveform = pulse_waveform(pulse)
    center = pulse_center_index(pulse)
    fs = pulse.sample_rate

    zi, xi = np.nonzero(s_field.values)
    trace = np.zeros(n_samples)
    if zi.size == 0:
        return trace
    sx = s_field.origin[0] + xi * s_field.dx
    sz = s_field.origin[1] + zi * s_field.dz
    sval = s_field.values[zi, xi]
    const = amplitude_scale if amplitude_scale is not None else (
        medium.k_i * medium.p0 * s_field.cell_area
    )
    base = -const * sval

    elem_x = geometry.element_positions()
    active = np.flatnonzero(event.active)
    beam = _element_amplitudes(elem_x[active], sx, sz, model)
    buf = np.zeros(n_samples + waveform.size)
    for j, i in enumerate(active):
        r = np.hypot(sx - elem_x[i], sz)
        tau = event.delays[i] + r / medium.sos
        amp = base * beam[j]
        pos = tau * fs
        k0 = np.floor(pos).astype(np.int64)
        frac = pos - k0
        ok0 = (k0 >= 0) & (k0 < buf.size)
        np.add.at(buf, k0[ok0], amp[ok0] * (1 - frac[ok0]))
        k1 = k0 + 1
        ok1 = (k1 >= 0) & (k1 < buf.size)
        np.add.at(buf, k1[ok1], amp[ok1] * frac[ok1])
    trace = np.convolve(buf, waveform)[center : center + n_samples]
    return trace


def common_mode_trace(
    amplitude: float, pulse: PulseSpec, n_samples: int
) -> np.ndarray:
    """Deterministic interference trace identical in (+) and (-) acquisitions."""
    if amplitude == 0:
        return np.zeros(n_samples)
    t = np.arange(n_samples) / pulse.sample_rate
    return amplitude * np.sin(2 * np.pi * (pulse.center_frequency / 8) * t)


def simulate_dataset(
    s_field: SFieldGrid,
    events,
    geometry: ArrayGeometry,
    medium: Medium,
    pulse: PulseSpec,
    model: PressureModel,
    acquisition: AcquisitionSpec,
    seed: int,
    max_depth: float,
    amplitude_scale: float | None = None,
    threads: int = 1,
) -> ChannelDataSet:
    """Simulate the full conditioned channel set for a transmit sequence.

    Per event: the clean trace and its polarity-flipped copy are acquired
    with independent averaged noise and a shared common-mode component,
    differentially subtracted, and matched-filtered with the pulse template.
    Channel ``i`` draws its noise from a generator seeded by ``(seed, i)``,
    so results do not depend on execution order or thread count.
    """
    events = list(events)
    if not events:
        raise InvalidEventError("at least one transmit event is required")
    n = trace_length(max_depth, medium, pulse)
    template = pulse_waveform(pulse)
    cm = common_mode_trace(acquisition.common_mode_amplitude, pulse, n)
    channels = np.zeros((len(events), n))

    def build(i: int) -> None:
        clean = simulate_channel(
            s_field, events[i], geometry, medium, pulse, model, n, amplitude_scale
        )
        rng = np.random.default_rng((seed, i))
        sigma2 = acquisition.noise_power
        v_plus = clean + cm
        v_minus = -clean + cm
        if sigma2 > 0:
            v_plus = v_plus + rng.normal(0.0, np.sqrt(sigma2 / acquisition.k), n)
            v_minus = v_minus + rng.normal(0.0, np.sqrt(sigma2 / acquisition.k), n)
        diff = differential_subtract(
            acquisition.rf_gain * v_plus, acquisition.rf_gain * v_minus
        )
        channels[i] = matched_filter(diff, template)

    if threads > 1 and len(events) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(build, range(len(events))))
    else:
        for i in range(len(events)):
            build(i)

    return ChannelDataSet(
        channels=channels,
        sample_rate=pulse.sample_rate,
        t0=0.0,
        events=tuple(events),
        geometry=geometry,
        medium=medium,
        pulse=pulse,
    )
