"""Population dynamics of the driven two-level system and their analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import schur

from . import analytic_model as am
from .errors import DimensionMismatchError, DivergentFlipTimeError
from .floquet import QuasienergyPoint, spectrum_sweep, tls_monodromies
from .propagator import DEFAULT_STEPS_TLS, PropagationGrid, evolve_state, matrix_exp_skew, ordered_product
from .tls_model import DriveParams, hamiltonian

GROUND = np.array([1.0, 0.0], dtype=complex)
STEP_NOISE_FLOOR = 0.02
# Fraction of the period at which the first population step happens. Steps
# sit at the zero crossings of A cos(wt), where gamma_z is stationary.
STEP_PHASE = 0.25


@dataclass
class ProbabilityTrace:
    """Time-sampled non-decay probability ``|<0|psi(t)>|^2``."""

    times: np.ndarray
    pnd: np.ndarray
    params: DriveParams

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.pnd = np.asarray(self.pnd, dtype=float)
        if self.times.shape != self.pnd.shape:
            raise DimensionMismatchError("times and pnd must have the same length")

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class Plateau:
    t_start: float
    t_end: float
    mean_p: float
    oscillation_amplitude: float


@dataclass
class StepLadder:
    """Staircase structure of a probability trace.

    ``segments`` holds the per-interval statistics before merging;
    ``plateaus`` merges neighbours whose means do not differ significantly.
    """

    plateaus: list[Plateau]
    monotone_decreasing: bool
    segments: list[Plateau] = field(default_factory=list)
    boundaries: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def plateau_count(self) -> int:
        return len(self.plateaus)

    def to_dict(self) -> dict:
        def rows(items):
            return [
                {"t_start": p.t_start, "t_end": p.t_end, "mean_p": p.mean_p, "oscillation_amplitude": p.oscillation_amplitude}
                for p in items
            ]

        return {
            "plateau_count": self.plateau_count,
            "monotone_decreasing": self.monotone_decreasing,
            "boundaries": [float(b) for b in self.boundaries],
            "plateaus": rows(self.plateaus),
            "segments": rows(self.segments),
        }


class BlochPoint(NamedTuple):
    t: float
    x: float
    y: float
    z: float


def tls_grid(p: DriveParams, horizon: float, steps_per_period: int = DEFAULT_STEPS_TLS, sample_stride: int = 1) -> PropagationGrid:
    return PropagationGrid(0.0, horizon, steps_per_period, sample_stride, p.period)


def _initial(psi0) -> np.ndarray:
    psi = GROUND if psi0 is None else np.asarray(psi0, dtype=complex)
    if psi.shape != (2,):
        raise DimensionMismatchError(f"expected a two-level state, got shape {psi.shape}")
    return psi


def evolve_tls(p: DriveParams, horizon: float, psi0=None, steps_per_period: int = DEFAULT_STEPS_TLS,
               sample_stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Trajectory of the two-level model from ``psi0`` (default ``|0>``)."""
    return evolve_state(partial(hamiltonian, p), _initial(psi0), tls_grid(p, horizon, steps_per_period, sample_stride))


def non_decay_trace(p: DriveParams, psi0=None, horizon: float | None = None,
                    steps_per_period: int = DEFAULT_STEPS_TLS, sample_stride: int = 1) -> ProbabilityTrace:
    """Sample ``P_ND(t)`` on ``[0, horizon]`` (default ``1.2 * T_F``)."""
    if horizon is None:
        horizon = 1.2 * am.flip_time(p)
    times, states = evolve_tls(p, horizon, psi0, steps_per_period, sample_stride)
    return ProbabilityTrace(times, np.abs(states[:, 0]) ** 2, p)


def evolution_operator(p: DriveParams, t: float, steps_per_period: int = DEFAULT_STEPS_TLS,
                       u_period: np.ndarray | None = None) -> np.ndarray:
    """``U(t, 0)`` computed as ``U(r) U(T)^m`` with ``t = m T + r``.

    Whole periods reuse the monodromy operator, so long times cost no more
    than one period of propagation.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    m, r = divmod(t, p.period)
    m = int(m)
    if u_period is None:
        u_period = tls_monodromies(p.with_amplitude(0.0), [p.amp_ratio], steps_per_period)[0] if m else np.eye(2)
    tri, z = schur(u_period, output="complex")
    power = (z * np.diag(tri) ** m) @ np.conj(z).T
    if r <= 0:
        return power
    grid = tls_grid(p, r, steps_per_period)
    h = hamiltonian(p, grid.midpoints())
    return ordered_product(matrix_exp_skew(h, grid.step)) @ power


def pnd_at(p: DriveParams, t: float, steps_per_period: int = DEFAULT_STEPS_TLS, u_period=None) -> float:
    """Non-decay probability at a single time, starting from ``|0>``."""
    return float(abs(evolution_operator(p, t, steps_per_period, u_period)[0, 0]) ** 2)


def step_times(period: float, horizon: float, offset: float = STEP_PHASE) -> np.ndarray:
    """Interior times ``offset * T + k T / 2`` inside ``(0, horizon)``."""
    first = offset * period
    ks = np.arange(0, int(np.ceil((horizon - first) / (period / 2))) + 1)
    times = first + ks * period / 2
    return times[(times > 0) & (times < horizon)]


def detect_steps(trace: ProbabilityTrace, noise_floor: float = STEP_NOISE_FLOOR, offset: float = STEP_PHASE) -> StepLadder:
    """Segment a trace into half-period intervals and merge them into plateaus.

    Cuts are placed at ``offset * T + k T/2``; with the default offset these
    are the zero crossings of the drive, where the population steps happen.
    A boundary is a step when the neighbouring segment means differ by more
    than ``max(noise_floor, half the larger peak-to-peak oscillation)``.
    The ladder is monotone when no segment mean rises by more than
    ``noise_floor`` before the lowest segment (completed inversion) is
    reached.

    Raises:
        ValueError: if the trace spans less than one period or has fewer than
            64 samples per period.
    """
    period = trace.params.period
    t, p = trace.times, trace.pnd
    span = t[-1] - t[0]
    if span < period * (1 - 1e-9):
        raise ValueError("trace must cover at least one drive period")
    if (len(t) - 1) / span * period < 64:
        raise ValueError("trace must have at least 64 samples per period")
    cuts = step_times(period, t[-1], offset)
    idx = np.unique(np.clip(np.searchsorted(t, cuts), 0, len(t) - 1))
    # snap each cut to the nearest sample
    idx = np.array([i - 1 if i > 0 and abs(t[i - 1] - c) < abs(t[i] - c) else i for i, c in zip(idx, cuts[: len(idx)])], dtype=int)
    edges = [0, *[int(i) for i in idx if 0 < i < len(t) - 1], len(t) - 1]
    segments: list[Plateau] = []
    spans: list[tuple[int, int]] = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1:
            continue
        vals = p[a : b + 1]
        segments.append(Plateau(float(t[a]), float(t[b]), float(vals.mean()), float(np.ptp(vals))))
        spans.append((a, b))

    plateaus: list[Plateau] = []
    run = [0]
    for k in range(1, len(segments)):
        prev, cur = segments[k - 1], segments[k]
        floor = max(noise_floor, 0.5 * max(prev.oscillation_amplitude, cur.oscillation_amplitude))
        if abs(cur.mean_p - prev.mean_p) > floor:
            plateaus.append(_merge(p, t, spans, run))
            run = [k]
        else:
            run.append(k)
    if segments:
        plateaus.append(_merge(p, t, spans, run))

    means = np.array([s.mean_p for s in segments])
    bottom = int(np.argmin(means)) if means.size else 0
    monotone = bool(np.all(np.diff(means[: bottom + 1]) <= noise_floor))
    boundaries = np.array([s.t_start for s in segments[1:]])
    return StepLadder(plateaus, monotone, segments, boundaries)


def _merge(p, t, spans, run) -> Plateau:
    a = spans[run[0]][0]
    b = spans[run[-1]][1]
    vals = p[a : b + 1]
    return Plateau(float(t[a]), float(t[b]), float(vals.mean()), float(np.ptp(vals)))


def bloch_vectors(states: np.ndarray) -> np.ndarray:
    """``(<sx>, <sy>, <sz>)`` for each two-level state, shape (n, 3)."""
    states = np.asarray(states)
    a, b = states[..., 0], states[..., 1]
    cross = np.conj(a) * b
    return np.stack([2 * cross.real, 2 * cross.imag, np.abs(a) ** 2 - np.abs(b) ** 2], axis=-1)


def bloch_trajectory(p: DriveParams, psi0=None, horizon: float | None = None,
                     steps_per_period: int = DEFAULT_STEPS_TLS, sample_stride: int = 1) -> list[BlochPoint]:
    if horizon is None:
        horizon = 1.2 * am.flip_time(p)
    times, states = evolve_tls(p, horizon, psi0, steps_per_period, sample_stride)
    vecs = bloch_vectors(states)
    return [BlochPoint(float(tt), *map(float, v)) for tt, v in zip(times, vecs)]


def flip_time_from_spectrum(point: QuasienergyPoint, degeneracy_tol: float | None = None) -> float:
    """``pi / gap`` for a quasienergy point.

    Raises:
        DivergentFlipTimeError: when the gap is at or below the degeneracy
            tolerance (default ``1e-3 * omega``).
    """
    tol = 1e-3 * point.omega if degeneracy_tol is None else degeneracy_tol
    if point.gap <= tol:
        raise DivergentFlipTimeError(f"quasienergy gap {point.gap:.3e} is below {tol:.1e}; flip time diverges")
    return np.pi / point.gap


def compare_analytic(p: DriveParams, horizon: float | None = None, steps_per_period: int = DEFAULT_STEPS_TLS,
                     sample_stride: int = 1) -> tuple[float, float]:
    """Sup-norm and RMS difference between numerical and analytic ``P_ND``.

    The horizon defaults to the averaged flip time ``pi / |delta J0(2A/omega)|``.
    """
    if horizon is None:
        horizon = am.flip_time(p)
    trace = non_decay_trace(p, None, horizon, steps_per_period, sample_stride)
    diff = np.abs(trace.pnd - am.analytic_pnd(p, trace.times))
    return float(diff.max()), float(np.sqrt(np.mean(diff**2)))


def inversion_window_min(p: DriveParams, t_flip: float, width: float | None = None,
                         steps_per_period: int = DEFAULT_STEPS_TLS) -> float:
    """Minimum of ``P_ND`` over ``[t_flip - width/2, t_flip + width/2]`` (default width T/8)."""
    width = p.period / 8 if width is None else width
    trace = non_decay_trace(p, None, t_flip + width / 2, steps_per_period)
    mask = trace.times >= t_flip - width / 2
    return float(trace.pnd[mask].min())


@dataclass
class PndScan:
    """``P_ND`` at the spectrum-derived flip time across an amplitude grid."""

    amp_ratios: np.ndarray
    gaps: np.ndarray
    t_flip: np.ndarray
    pnd: np.ndarray
    skipped: np.ndarray


def scan_pnd(delta: float, omega: float, amp_ratios: Sequence[float], gap_floor: float | None = None,
             steps_per_period: int = DEFAULT_STEPS_TLS) -> PndScan:
    """Evolve to ``T_F = pi / gap`` at each amplitude and record ``P_ND(T_F)``.

    Points whose tracked gap is at or below ``gap_floor`` (default
    ``1e-3 * omega``) have a diverging flip time and are marked skipped.
    """
    floor = 1e-3 * omega if gap_floor is None else gap_floor
    amp_ratios = np.asarray(amp_ratios, dtype=float)
    sweep = spectrum_sweep(delta, omega, amp_ratios, steps_per_period)
    base = DriveParams(delta, omega, 0.0)
    us = tls_monodromies(base, amp_ratios, steps_per_period)
    gaps = np.array([pt.gap for pt in sweep])
    t_flip = np.full(amp_ratios.size, np.nan)
    pnd = np.full(amp_ratios.size, np.nan)
    skipped = gaps <= floor
    for i, (a, g) in enumerate(zip(amp_ratios, gaps)):
        if skipped[i]:
            continue
        p = DriveParams.from_ratio(delta, omega, a)
        t_flip[i] = np.pi / g
        pnd[i] = pnd_at(p, t_flip[i], steps_per_period, us[i])
    return PndScan(amp_ratios, gaps, t_flip, pnd, skipped)
