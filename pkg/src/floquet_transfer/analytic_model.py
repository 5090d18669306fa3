"""Closed-form description of the driven two-level system.

In the rotating frame the drive becomes a unit field rotating in the x-y
plane. Keeping only its x component gives the factorized evolution

    U(t) = exp(-i gamma_z(t) sz / 2) exp(-i gamma_x(t) sx / 2),

with ``gamma_x(t) = delta * int_0^t cos(gamma_z(s)) ds = delta' t + phase(t)``,
where ``delta' = delta J0(2A/omega)`` is the averaged gap and ``phase(t)`` is
the T-periodic remainder computed by :func:`delta_phase`. The approximation
is accurate where the quasienergy gap is locally maximal; it is evaluated
anywhere but should only be trusted there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bessel import bessel_j, bessel_zeros
from .errors import DivergentFlipTimeError
from .tls_model import DEFAULT_TRUNCATION, DriveParams, SeriesTruncation, gamma_z

FLIP_TIME_RTOL = 1e-12


@dataclass(frozen=True)
class AnalyticPhases:
    """Rotation angles of the factorized evolution operator at time ``t``."""

    t: float | np.ndarray
    gamma_x: float | np.ndarray
    gamma_z: float | np.ndarray
    delta_phase: float | np.ndarray
    effective_gap: float


def rwa_gap(p: DriveParams) -> float:
    """Averaged (signed) gap ``delta * J0(2A/omega)``."""
    return p.delta * bessel_j(0, p.nu)


def flip_time(p: DriveParams) -> float:
    """Population inversion time ``pi / |delta'|``.

    Raises:
        DivergentFlipTimeError: at a zero of ``J0(2A/omega)``.
    """
    gap = abs(rwa_gap(p))
    if gap <= FLIP_TIME_RTOL * p.delta:
        raise DivergentFlipTimeError(f"averaged gap vanishes at 2A/omega = {p.nu:.10g}; flip time diverges")
    return np.pi / gap


def delta_phase(p: DriveParams, t, truncation: SeriesTruncation = DEFAULT_TRUNCATION):
    """Periodic part of ``gamma_x``: ``(delta/omega) sum_n J_2n(2A/omega)/n sin(2n omega t)``."""
    coeffs = truncation.coefficients(p.nu)
    even = np.arange(2, coeffs.size, 2)
    n = even // 2
    wt = p.omega * np.asarray(t, dtype=float)
    out = (p.delta / p.omega) * np.sum((coeffs[even] / n) * np.sin(np.multiply.outer(wt, even)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def gamma_x(p: DriveParams, t, truncation: SeriesTruncation = DEFAULT_TRUNCATION):
    return rwa_gap(p) * np.asarray(t, dtype=float) + delta_phase(p, t, truncation)


def analytic_phases(p: DriveParams, t, truncation: SeriesTruncation = DEFAULT_TRUNCATION) -> AnalyticPhases:
    dphi = delta_phase(p, t, truncation)
    gap = rwa_gap(p)
    return AnalyticPhases(
        t=t,
        gamma_x=gap * np.asarray(t, dtype=float) + dphi,
        gamma_z=gamma_z(p, t),
        delta_phase=dphi,
        effective_gap=gap,
    )


def analytic_evolution(p: DriveParams, t, truncation: SeriesTruncation = DEFAULT_TRUNCATION) -> np.ndarray:
    """Factorized evolution operator; a time array gives shape (n, 2, 2)."""
    gx = np.asarray(gamma_x(p, t, truncation))
    gz = np.asarray(gamma_z(p, t))
    c, s = np.cos(gx / 2), np.sin(gx / 2)
    ez = np.exp(-0.5j * gz)
    u = np.empty(gx.shape + (2, 2), dtype=complex)
    # diag(ez, conj(ez)) @ [[c, -is], [-is, c]]
    u[..., 0, 0] = ez * c
    u[..., 0, 1] = -1j * ez * s
    u[..., 1, 0] = -1j * np.conj(ez) * s
    u[..., 1, 1] = np.conj(ez) * c
    return u


def analytic_pnd(p: DriveParams, t, truncation: SeriesTruncation = DEFAULT_TRUNCATION):
    """``|<0|U(t)|0>|^2 = cos^2(gamma_x / 2)`` for a system started in ``|0>``."""
    return np.cos(np.asarray(gamma_x(p, t, truncation)) / 2) ** 2


def predicted_residual(p: DriveParams, truncation: SeriesTruncation = DEFAULT_TRUNCATION) -> float:
    """Non-decay probability left at the flip time: ``sin^2(phase(T_F) / 2)``."""
    return float(np.sin(delta_phase(p, flip_time(p), truncation) / 2) ** 2)


def special_amplitudes(kind: str, count: int) -> np.ndarray:
    """First ``count`` reference amplitudes ``A/omega``, ascending.

    ``kind="peak"`` gives halved zeros of J1 (extrema of J0, i.e. maxima of
    the averaged gap); ``kind="cdt"`` gives halved zeros of J0 (degeneracies).
    """
    if kind == "peak":
        order = 1
    elif kind == "cdt":
        order = 0
    else:
        raise ValueError(f"kind must be 'peak' or 'cdt', got {kind!r}")
    return 0.5 * bessel_zeros(order, count)


def step_count_estimate(p: DriveParams) -> float:
    """Expected number of ladder steps before inversion: ``2 omega / Omega = omega / |delta'|``."""
    return p.omega * flip_time(p) / np.pi
