"""Synthetic passage generator: modal bridge response plus axle-local bursts.

The bridge is a simply supported beam reduced to a few sine modes.  Each mode
is a damped oscillator driven by the moving axle loads and integrated exactly
for piecewise-linear forcing (first-order hold).  On top of the global modal
response, every axle adds a short oscillatory burst when it passes directly
over a sensor, with amplitude proportional to the axle load; this is what
makes the per-sensor crossing instant locally visible in the signal.  Wheel
load channels are built as narrow triangular pulses at the two measuring
points, so generated passages run through the same labeling pipeline as
measured ones.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import cont2discrete, lfilter, ss2tf

from .errors import DurationTooShortError, InvalidInputError
from .ingest import (
    DEFAULT_SAMPLE_RATE,
    DEFAULT_WLM_SPACING,
    DEFAULT_WLM_SPACING_UNCERTAINTY,
    PassageRecord,
)
from .util import round_half_away

# Triangular wheel-load pulse, centre sample at the crossing index.
PULSE_SHAPE = np.array([0.3, 0.7, 1.0, 0.7, 0.3])


@dataclass(frozen=True)
class SyntheticScenario:
    """Full description of one synthetic crossing."""

    id: str
    velocity: float
    axle_loads: tuple[float, ...]
    axle_spacings: tuple[float, ...]
    span: float = 16.4
    modal_frequencies: tuple[float, ...] = (6.9, 27.6, 62.1)
    damping_ratios: tuple[float, ...] = (0.02, 0.015, 0.01)
    modal_mass: float = 1000.0
    sensor_positions: tuple[float, ...] = (4.1, 12.3)
    bridge_offset: float = 20.0
    trigger_time: float = 0.5
    sample_rate: float = DEFAULT_SAMPLE_RATE
    wlm_spacing: float = DEFAULT_WLM_SPACING
    wlm_spacing_uncertainty: float = DEFAULT_WLM_SPACING_UNCERTAINTY
    duration: float | None = None
    noise_rms: float = 0.05
    burst_scale: float = 2.0
    burst_width_m: float = 0.35
    burst_carrier_hz: float = 64.0

    def __post_init__(self):
        if self.velocity <= 0:
            raise InvalidInputError("velocity must be positive")
        if len(self.axle_loads) < 1 or any(p <= 0 for p in self.axle_loads):
            raise InvalidInputError("axle_loads must be non-empty and positive")
        if len(self.axle_spacings) != len(self.axle_loads) - 1:
            raise InvalidInputError("need one spacing per consecutive axle pair")
        if any(d <= 0 for d in self.axle_spacings):
            raise InvalidInputError("axle spacings must be positive")
        if self.span <= 0 or self.sample_rate <= 0 or self.wlm_spacing <= 0:
            raise InvalidInputError("span, sample_rate and wlm_spacing must be positive")
        if len(self.modal_frequencies) != len(self.damping_ratios):
            raise InvalidInputError("one damping ratio per mode required")
        if any(f <= 0 for f in self.modal_frequencies) or self.modal_mass <= 0:
            raise InvalidInputError("modal frequencies and mass must be positive")
        if any(not 0.0 <= x <= self.span for x in self.sensor_positions):
            raise InvalidInputError("sensor positions must lie on the bridge")
        if self.bridge_offset < 0 or self.trigger_time < 0:
            raise InvalidInputError("bridge_offset and trigger_time must be >= 0")
        if not 0.0 <= self.noise_rms < 1.0:
            raise InvalidInputError("noise_rms must be in [0, 1)")

    @property
    def n_axles(self) -> int:
        return len(self.axle_loads)

    @property
    def axle_distances(self) -> np.ndarray:
        """Distance of each axle behind the first one."""
        return np.concatenate([[0.0], np.cumsum(self.axle_spacings)])

    @property
    def sensor_offsets(self) -> np.ndarray:
        """Travel distance from the first measuring point to each sensor."""
        return self.bridge_offset + np.asarray(self.sensor_positions, dtype=np.float64)


@dataclass
class SynthTruth:
    """Exact ground truth kept alongside the generated record."""

    velocity: float
    crossing_times: np.ndarray
    crossing_indices: np.ndarray
    g1_indices: np.ndarray
    g2_indices: np.ndarray


def _foh_oscillator(omega: float, zeta: float, u: np.ndarray, dt: float):
    """Integrate q'' + 2*zeta*omega*q' + omega^2*q = u for piecewise-linear u.

    Returns (q, qdot) sampled on the input grid; exact for first-order-hold
    input, zero initial conditions.
    """
    a = np.array([[0.0, 1.0], [-omega * omega, -2.0 * zeta * omega]])
    b = np.array([[0.0], [1.0]])
    c = np.eye(2)
    d = np.zeros((2, 1))
    ad, bd, cd, dd, _ = cont2discrete((a, b, c, d), dt, method="foh")
    num, den = ss2tf(ad, bd, cd, dd)
    q = lfilter(num[0], den, u)
    qdot = lfilter(num[1], den, u)
    return q, qdot


def _mode_shape(k: int, x: np.ndarray, span: float) -> np.ndarray:
    return np.sin(k * math.pi * x / span)


def simulate_passage(
    scenario: SyntheticScenario, rng: np.random.Generator
) -> tuple[PassageRecord, SynthTruth]:
    """Generate one passage record plus its exact crossing ground truth."""
    sc = scenario
    fs = sc.sample_rate
    dt = 1.0 / fs
    dists = sc.axle_distances
    offsets = sc.sensor_offsets

    # Travel-axis coordinates are measured from the first measuring point in
    # the direction of travel; axle a sits at v*(t - trigger) - dists[a].
    g1_times = sc.trigger_time + dists / sc.velocity
    g2_times = g1_times + sc.wlm_spacing / sc.velocity
    crossing_times = g1_times[:, None] + offsets[None, :] / sc.velocity

    exit_time = sc.trigger_time + (sc.bridge_offset + sc.span + dists[-1]) / sc.velocity
    needed = max(exit_time, g2_times[-1], crossing_times.max()) + 600 * dt
    if sc.duration is None:
        n = int(math.ceil(needed * fs))
    else:
        n = int(round(sc.duration * fs))
        last_pulse = round_half_away(g2_times[-1] * fs) + len(PULSE_SHAPE) // 2
        last_cross = round_half_away(crossing_times.max() * fs)
        if max(last_pulse, last_cross) >= n:
            raise DurationTooShortError(
                f"duration {sc.duration} s too short: events extend to sample "
                f"{max(last_pulse, last_cross)} of {n}"
            )
    t = np.arange(n) * dt

    # Modal force per mode: sum of loads weighted by the mode shape at the
    # instantaneous axle position while the axle is on the bridge.
    positions = sc.velocity * (t[None, :] - sc.trigger_time) - dists[:, None]
    local = positions - sc.bridge_offset
    on_bridge = (local >= 0.0) & (local <= sc.span)
    loads = np.asarray(sc.axle_loads, dtype=np.float64)

    accel = np.zeros((n, len(sc.sensor_positions)))
    sensor_x = np.asarray(sc.sensor_positions, dtype=np.float64)
    for k, (f_k, zeta) in enumerate(zip(sc.modal_frequencies, sc.damping_ratios), start=1):
        shape_at_axles = np.where(on_bridge, _mode_shape(k, np.clip(local, 0.0, sc.span), sc.span), 0.0)
        u = (loads[:, None] * shape_at_axles).sum(axis=0) / sc.modal_mass
        omega = 2.0 * math.pi * f_k
        q, qdot = _foh_oscillator(omega, zeta, u, dt)
        qddot = u - 2.0 * zeta * omega * qdot - omega * omega * q
        accel += _mode_shape(k, sensor_x, sc.span)[None, :] * qddot[:, None]

    # Axle-local bursts make the crossing instant visible per sensor.
    base = np.sqrt(np.mean(accel * accel, axis=0))
    base = np.where(base > 0, base, 1.0)
    sigma = sc.burst_width_m / sc.velocity
    mean_load = float(loads.mean())
    for s in range(len(sc.sensor_positions)):
        amp_s = sc.burst_scale * base[s]
        for a in range(sc.n_axles):
            t0 = crossing_times[a, s]
            lo = max(0, int(math.floor((t0 - 4.0 * sigma) * fs)))
            hi = min(n, int(math.ceil((t0 + 4.0 * sigma) * fs)) + 1)
            if lo >= hi:
                continue
            tau = t[lo:hi] - t0
            env = np.exp(-0.5 * (tau / sigma) ** 2)
            accel[lo:hi, s] += (
                amp_s * (loads[a] / mean_load) * env * np.cos(2.0 * math.pi * sc.burst_carrier_hz * tau)
            )

    if sc.noise_rms > 0:
        rms = np.sqrt(np.mean(accel * accel, axis=0))
        rms = np.where(rms > 0, rms, 1.0)
        accel += rng.standard_normal(accel.shape) * (sc.noise_rms * rms)[None, :]

    wheel_load = np.zeros((n, 2))
    g1_idx = np.array([round_half_away(x * fs) for x in g1_times], dtype=np.int64)
    g2_idx = np.array([round_half_away(x * fs) for x in g2_times], dtype=np.int64)
    half = len(PULSE_SHAPE) // 2
    for col, centers in ((0, g1_idx), (1, g2_idx)):
        for a, c in enumerate(centers):
            if c - half < 0 or c + half >= n:
                raise DurationTooShortError(
                    f"wheel-load pulse at sample {c} does not fit in {n} samples"
                )
            wheel_load[c - half : c + half + 1, col] += PULSE_SHAPE * loads[a]

    record = PassageRecord(
        id=sc.id,
        accel=accel,
        wheel_load=wheel_load,
        sensor_offsets=offsets,
        sample_rate=fs,
        wlm_spacing=sc.wlm_spacing,
        wlm_spacing_uncertainty=sc.wlm_spacing_uncertainty,
    )
    truth = SynthTruth(
        velocity=sc.velocity,
        crossing_times=crossing_times,
        crossing_indices=np.array(
            [[round_half_away(x * fs) for x in row] for row in crossing_times], dtype=np.int64
        ),
        g1_indices=g1_idx,
        g2_indices=g2_idx,
    )
    return record, truth


def random_scenario(
    rng: np.random.Generator,
    index: int,
    n_axles_range: tuple[int, int] = (2, 16),
    velocity_range: tuple[float, float] = (10.0, 57.0),
    load_range: tuple[float, float] = (60.0, 150.0),
    spacing_range: tuple[float, float] = (2.0, 2.6),
    noise_rms: float = 0.05,
    **overrides,
) -> SyntheticScenario:
    """Draw one scenario with uniformly sampled axle count, speed, loads, spacings."""
    n_axles = int(rng.integers(n_axles_range[0], n_axles_range[1] + 1))
    velocity = float(rng.uniform(*velocity_range))
    loads = tuple(float(x) for x in rng.uniform(*load_range, size=n_axles))
    spacings = tuple(float(x) for x in rng.uniform(*spacing_range, size=n_axles - 1))
    return SyntheticScenario(
        id=f"syn{index:04d}",
        velocity=velocity,
        axle_loads=loads,
        axle_spacings=spacings,
        noise_rms=noise_rms,
        **overrides,
    )
