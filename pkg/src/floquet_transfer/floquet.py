"""Floquet quasienergies of periodically driven systems.

Quasienergies are the eigenphases of the one-period evolution operator
``U(T)``: an eigenvalue ``lambda`` gives ``eps = -arg(lambda) / T`` folded into
the zone ``(-omega/2, omega/2]``. Sweeps over the drive amplitude follow each
Floquet mode by maximum overlap with its predecessor, which yields a signed,
unfolded splitting. The folded ``gap`` (distance on the quasienergy circle)
is what plots and flip times use; the signed splitting tells genuine
extrema apart from fold artifacts and places degeneracies at its zeros.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import schur
from scipy.optimize import linear_sum_assignment, minimize_scalar

from .errors import FeatureError, PeriodicityError
from .propagator import (
    DEFAULT_STEPS_TLS,
    PropagationGrid,
    check_unitary,
    matrix_exp_skew,
    ordered_product,
    propagate,
)
from .tls_model import DriveParams, hamiltonian

logger = logging.getLogger(__name__)

PERIODICITY_ATOL = 1e-10
CONTINUITY_OVERLAP = 0.9
MAX_BISECT_DEPTH = 6


@dataclass
class QuasienergyPoint:
    """Folded quasienergies and Floquet modes at one drive amplitude.

    Attributes:
        amp_ratio: Drive amplitude in units of omega (``nan`` when unknown).
        omega: Drive frequency; quasienergies lie in ``(-omega/2, omega/2]``.
        quasienergies: Folded quasienergies, one per Floquet mode.
        floquet_modes: Unitary matrix whose columns are the modes at t = 0.
        gap: Circle distance between the first two quasienergies.
        splitting: Unfolded ``eps_0 - eps_1`` continued along a sweep. Equal to
            the raw folded difference for an isolated point.
        min_overlap: Smallest matched-mode overlap with the previous sweep
            point (1 for the first point).
    """

    amp_ratio: float
    omega: float
    quasienergies: np.ndarray
    floquet_modes: np.ndarray
    gap: float
    splitting: float
    min_overlap: float = 1.0

    @property
    def eps_plus(self) -> float:
        return float(np.max(self.quasienergies[:2]))

    @property
    def eps_minus(self) -> float:
        return float(np.min(self.quasienergies[:2]))


@dataclass(frozen=True)
class SpectralFeature:
    """A gap maximum (``peak``) or a quasienergy degeneracy."""

    kind: str
    amp_ratio: float
    gap: float
    label: int


def fold(eps, omega: float):
    """Fold quasienergies into ``(-omega/2, omega/2]``."""
    eps = np.asarray(eps, dtype=float)
    out = eps - omega * np.ceil(eps / omega - 0.5)
    return float(out) if out.ndim == 0 else out


def circle_gap(splitting, omega: float):
    """Distance between two quasienergies on the circle of circumference omega."""
    d = np.mod(np.abs(splitting), omega)
    return np.minimum(d, omega - d)


def check_periodic(generator: Callable, period: float, atol: float = PERIODICITY_ATOL) -> None:
    """Compare the generator at three sample times against one period later."""
    probes = np.array([0.0, 0.3183098861837907, 0.7071067811865476]) * period
    for t in probes:
        dev = np.abs(np.asarray(generator(t)) - np.asarray(generator(t + period))).max()
        if dev > atol:
            raise PeriodicityError(f"generator is not {period:.6g}-periodic: deviation {dev:.3e} at t={t:.6g}")


def monodromy(generator: Callable, omega: float, steps_per_period: int = DEFAULT_STEPS_TLS) -> np.ndarray:
    """One-period evolution operator ``U(T, 0)`` with ``T = 2 pi / omega``."""
    period = 2 * np.pi / omega
    check_periodic(generator, period)
    return propagate(generator, PropagationGrid(0.0, period, steps_per_period, 1, period))


def tls_monodromies(p: DriveParams, amp_ratios: Sequence[float], steps_per_period: int = DEFAULT_STEPS_TLS) -> np.ndarray:
    """``U(T)`` of the two-level model for many amplitudes at once, shape (n, 2, 2)."""
    amp_ratios = np.asarray(amp_ratios, dtype=float)
    grid = PropagationGrid(0.0, p.period, steps_per_period, 1, p.period)
    cos_wt = np.cos(p.omega * grid.midpoints())
    out = np.empty((amp_ratios.size, 2, 2), dtype=complex)
    batch = max(1, (1 << 20) // grid.n_steps)
    for lo in range(0, amp_ratios.size, batch):
        amps = amp_ratios[lo : lo + batch] * p.omega
        hs = np.zeros((amps.size, grid.n_steps, 2, 2), dtype=complex)
        eps = p.dc_offset + amps[:, None] * cos_wt[None, :]
        hs[..., 0, 0] = eps
        hs[..., 1, 1] = -eps
        hs[..., 0, 1] = hs[..., 1, 0] = p.delta / 2
        out[lo : lo + batch] = ordered_product(matrix_exp_skew(hs, grid.step))
    return out


def quasienergies(u_period: np.ndarray, omega: float, amp_ratio: float = float("nan")) -> QuasienergyPoint:
    """Folded quasienergies and Floquet modes of a monodromy operator.

    A complex Schur form is used instead of a plain eigensolver so that the
    modes stay orthonormal even when eigenvalues are (nearly) degenerate.
    """
    check_unitary(u_period)
    tri, modes = schur(np.asarray(u_period, dtype=complex), output="complex")
    lam = np.diag(tri)
    period = 2 * np.pi / omega
    eps = fold(-np.angle(lam) / period, omega)
    eps = np.atleast_1d(eps)
    split = float(eps[0] - eps[1]) if eps.size > 1 else 0.0
    return QuasienergyPoint(
        amp_ratio=float(amp_ratio),
        omega=float(omega),
        quasienergies=eps,
        floquet_modes=modes,
        gap=float(circle_gap(split, omega)),
        splitting=split,
    )


def _match(prev: QuasienergyPoint, cur: QuasienergyPoint) -> tuple[QuasienergyPoint, float]:
    """Reorder ``cur``'s modes to follow ``prev`` and unwrap the quasienergies."""
    overlap = np.abs(np.conj(prev.floquet_modes).T @ cur.floquet_modes) ** 2
    rows, cols = linear_sum_assignment(-overlap)
    order = cols[np.argsort(rows)]
    worst = float(np.sqrt(overlap[np.arange(order.size), order].min()))
    eps = cur.quasienergies[order]
    return (
        QuasienergyPoint(cur.amp_ratio, cur.omega, eps, cur.floquet_modes[:, order], cur.gap, cur.splitting, worst),
        worst,
    )


def _is_degenerate(pt: QuasienergyPoint, rtol: float = 1e-9) -> bool:
    """True when some pair of modes is degenerate, so mode identity is arbitrary."""
    eps = pt.quasienergies
    diffs = circle_gap(eps[:, None] - eps[None, :], pt.omega)
    np.fill_diagonal(diffs, np.inf)
    return bool(diffs.min() <= rtol * pt.omega)


def _continue(prev_eps_tracked: np.ndarray, eps: np.ndarray, omega: float) -> np.ndarray:
    return eps + omega * np.round((prev_eps_tracked - eps) / omega)


class _Tracker:
    """Follows modes along an amplitude grid, bisecting where overlaps drop."""

    def __init__(self, point_at: Callable[[float], QuasienergyPoint], omega: float):
        self.point_at = point_at
        self.omega = omega
        self.flagged: list[float] = []

    def step(self, prev, prev_tracked, cur, depth=0):
        matched, worst = _match(prev, cur)
        if _is_degenerate(prev):
            worst = 1.0
        if worst < CONTINUITY_OVERLAP and depth < MAX_BISECT_DEPTH:
            mid = self.point_at(0.5 * (prev.amp_ratio + cur.amp_ratio))
            mid_m, mid_tracked = self.step(prev, prev_tracked, mid, depth + 1)
            return self.step(mid_m, mid_tracked, cur, depth + 1)
        if worst < CONTINUITY_OVERLAP:
            self.flagged.append(cur.amp_ratio)
        tracked = _continue(prev_tracked, matched.quasienergies, self.omega)
        return matched, tracked


def track(points: list[QuasienergyPoint], point_at: Callable[[float], QuasienergyPoint] | None = None) -> list[QuasienergyPoint]:
    """Mode-match consecutive sweep points and set continuous splittings.

    ``point_at`` recomputes a point at an intermediate amplitude; when given,
    steps whose matched overlap falls below 0.9 are bisected.
    """
    if not points:
        return []
    omega = points[0].omega
    tracker = _Tracker(point_at or (lambda a: None), omega)
    first = points[0]
    tracked = first.quasienergies.copy()
    out = [first]
    prev = first
    for cur in points[1:]:
        if point_at is None:
            matched, worst = _match(prev, cur)
            if worst < CONTINUITY_OVERLAP and not _is_degenerate(prev):
                tracker.flagged.append(cur.amp_ratio)
            tracked = _continue(tracked, matched.quasienergies, omega)
        else:
            matched, tracked = tracker.step(prev, tracked, cur)
        if tracked.size > 1:
            matched.splitting = float(tracked[0] - tracked[1])
            matched.gap = float(circle_gap(matched.splitting, omega))
        out.append(matched)
        prev = matched
    if tracker.flagged:
        logger.warning("mode continuity below %.2f at %d sweep points", CONTINUITY_OVERLAP, len(tracker.flagged))
    return out


def spectrum_sweep(
    delta: float,
    omega: float,
    amp_ratios: Sequence[float],
    steps_per_period: int = DEFAULT_STEPS_TLS,
) -> list[QuasienergyPoint]:
    """Quasienergy spectrum of the two-level model versus ``A/omega``."""
    amp_ratios = np.asarray(amp_ratios, dtype=float)
    if amp_ratios.ndim != 1 or amp_ratios.size == 0:
        raise ValueError("amp_ratios must be a non-empty 1-D grid")
    if np.any(np.diff(amp_ratios) <= 0):
        raise ValueError("amp_ratios must be strictly increasing")
    base = DriveParams(delta, omega, 0.0)
    us = tls_monodromies(base, amp_ratios, steps_per_period)
    points = [quasienergies(u, omega, a) for u, a in zip(us, amp_ratios)]

    def point_at(a: float) -> QuasienergyPoint:
        return quasienergies(tls_monodromies(base, [a], steps_per_period)[0], omega, a)

    return track(points, point_at)


def _parabola_vertex(x, y):
    """Vertex of the parabola through three equally spaced points."""
    y0, y1, y2 = y
    h = x[1] - x[0]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return x[1], y1
    shift = 0.5 * (y0 - y2) / denom
    shift = float(np.clip(shift, -1.0, 1.0))
    return x[1] + shift * h, y1 - 0.25 * (y0 - y2) * shift


def _parabola_root(x, f):
    """Root of the interpolating parabola through three points nearest ``x[1]``."""
    coeffs = np.polyfit(np.asarray(x) - x[1], f, 2)
    roots = np.roots(coeffs) if abs(coeffs[0]) > 1e-300 else np.roots(coeffs[1:])
    roots = roots[np.isreal(roots)].real
    roots = roots[(roots >= x[0] - x[1] - 1e-12) & (roots <= x[2] - x[1] + 1e-12)]
    if roots.size == 0:
        return None
    return x[1] + roots[np.argmin(np.abs(roots))]


def find_features(sweep: Sequence[QuasienergyPoint], degeneracy_tol: float | None = None) -> list[SpectralFeature]:
    """Locate gap maxima (peaks) and degeneracies along a tracked sweep.

    Peaks are interior local maxima of the gap, refined by a parabola through
    the bracketing grid triple. Maxima that are only the gap folding over at
    ``omega/2`` are discarded. Local minima whose refined gap falls below
    ``degeneracy_tol`` (default ``1e-3 * omega``) are degeneracies; they are
    placed at the zero of the interpolated signed splitting when it changes
    sign, else at the parabolic vertex of the gap.
    """
    if len(sweep) < 3:
        raise FeatureError("feature extraction needs at least 3 sweep points")
    omega = sweep[0].omega
    tol = 1e-3 * omega if degeneracy_tol is None else degeneracy_tol
    x = np.array([pt.amp_ratio for pt in sweep])
    g = np.array([pt.gap for pt in sweep])
    s = np.array([pt.splitting for pt in sweep])
    d = np.mod(np.abs(s), omega)
    peaks: list[tuple[float, float]] = []
    degens: list[tuple[float, float]] = []
    for i in range(1, len(sweep) - 1):
        xs, gs = x[i - 1 : i + 2], g[i - 1 : i + 2]
        if g[i] > g[i - 1] and g[i] >= g[i + 1]:
            if np.sign(d[i - 1] - omega / 2) != np.sign(d[i + 1] - omega / 2):
                continue  # fold cusp, not a ribbon maximum
            peaks.append(_parabola_vertex(xs, gs))
        elif g[i] < g[i - 1] and g[i] <= g[i + 1]:
            k = np.round(s[i] / omega)
            root = _parabola_root(xs, s[i - 1 : i + 2] - k * omega)
            if root is not None:
                loc, gap = float(root), 0.0
            else:
                loc, gap = _parabola_vertex(xs, gs)
                gap = max(gap, 0.0)
            if gap <= tol:
                degens.append((loc, gap))
    features = [SpectralFeature("peak", float(a), float(v), n) for n, (a, v) in enumerate(peaks, 1)]
    features += [SpectralFeature("degeneracy", float(a), float(v), n) for n, (a, v) in enumerate(degens, 1)]
    return sorted(features, key=lambda f: (f.amp_ratio, f.kind))


def peaks_of(features: Sequence[SpectralFeature]) -> list[SpectralFeature]:
    return [f for f in features if f.kind == "peak"]


def degeneracies_of(features: Sequence[SpectralFeature]) -> list[SpectralFeature]:
    return [f for f in features if f.kind == "degeneracy"]


def refine_peak(delta: float, omega: float, feature: SpectralFeature, half_width: float = 0.02,
                steps_per_period: int = DEFAULT_STEPS_TLS, xatol: float = 1e-7) -> SpectralFeature:
    """Re-locate a peak by bounded golden-section search with fresh propagations."""
    base = DriveParams(delta, omega, 0.0)

    def neg_gap(a: float) -> float:
        return -quasienergies(tls_monodromies(base, [a], steps_per_period)[0], omega, a).gap

    lo = max(0.0, feature.amp_ratio - half_width)
    res = minimize_scalar(neg_gap, bounds=(lo, feature.amp_ratio + half_width), method="bounded",
                          options={"xatol": xatol})
    return SpectralFeature(feature.kind, float(res.x), float(-res.fun), feature.label)


def tls_quasienergy_point(p: DriveParams, steps_per_period: int = DEFAULT_STEPS_TLS) -> QuasienergyPoint:
    """Quasienergies of the two-level model at a single drive setting."""
    u = monodromy(partial(hamiltonian, p), p.omega, steps_per_period)
    return quasienergies(u, p.omega, p.amp_ratio)


@dataclass
class MeasuredPeaks:
    """Peaks of a sweep together with the grid that produced them."""

    delta: float
    omega: float
    amp_grid: np.ndarray
    features: list[SpectralFeature] = field(default_factory=list)

    @property
    def peaks(self) -> list[SpectralFeature]:
        return peaks_of(self.features)

    def peak(self, n: int) -> SpectralFeature:
        for f in self.peaks:
            if f.label == n:
                return f
        raise FeatureError(
            f"peak n={n} not resolved by the sweep A/omega in [{self.amp_grid[0]:g}, {self.amp_grid[-1]:g}] "
            f"({self.amp_grid.size} points); run a sweep extending past the expected location"
        )


_PEAK_CACHE: dict[tuple, MeasuredPeaks] = {}


def measured_peaks(delta: float, omega: float, count: int = 6, spacing: float = 0.01,
                   steps_per_period: int = DEFAULT_STEPS_TLS) -> MeasuredPeaks:
    """Sweep from ``A = 0`` far enough to resolve ``count`` gap maxima.

    Results are cached per ``(delta, omega, count, spacing, steps)``.
    """
    key = (float(delta), float(omega), int(count), float(spacing), int(steps_per_period))
    if key in _PEAK_CACHE:
        return _PEAK_CACHE[key]
    from .bessel import bessel_zeros

    # High-frequency reference: the peaks sit near halved zeros of J_1.
    upper = 0.5 * float(bessel_zeros(1, count + 1)[-1])
    grid = np.round(np.arange(0.0, upper + spacing / 2, spacing), 12)
    feats = find_features(spectrum_sweep(delta, omega, grid, steps_per_period))
    result = MeasuredPeaks(delta, omega, grid, feats)
    _PEAK_CACHE[key] = result
    return result
