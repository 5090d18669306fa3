"""Sinusoidally driven two-level system.

The model Hamiltonian is ``H(t) = (delta/2) sx + eps(t) sz`` with
``eps(t) = dc_offset + amplitude * cos(omega t)``. Units are chosen so that
hbar = 1 and every frequency is angular. The basis state ``|0>`` is the +1
eigenvector of ``sz``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bessel import bessel_j, bessel_j_orders
from .errors import DimensionMismatchError, NonHermitianError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

HERMITIAN_ATOL = 1e-12

__all__ = [
    "DriveParams",
    "FieldComponents",
    "SeriesTruncation",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "bessel_j",
    "check_hermitian",
    "field_components",
    "gamma_z",
    "hamiltonian",
    "rotating_frame_hamiltonian",
    "rotating_frame_unitary",
]


@dataclass(frozen=True)
class DriveParams:
    """System gap and sinusoidal drive: ``(delta, omega, amplitude, dc_offset)``."""

    delta: float
    omega: float
    amplitude: float
    dc_offset: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.amplitude >= 0:
            raise ValueError(f"amplitude must be non-negative, got {self.amplitude}")
        if not np.isfinite([self.delta, self.omega, self.amplitude, self.dc_offset]).all():
            raise ValueError("drive parameters must be finite")

    @classmethod
    def from_ratio(cls, delta: float, omega: float, amp_ratio: float, dc_offset: float = 0.0):
        """Build parameters from the dimensionless amplitude ``A/omega``."""
        return cls(delta, omega, amp_ratio * omega, dc_offset)

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    @property
    def amp_ratio(self) -> float:
        return self.amplitude / self.omega

    @property
    def nu(self) -> float:
        """Bessel argument ``2A/omega``."""
        return 2 * self.amplitude / self.omega

    def with_amplitude(self, amplitude: float) -> DriveParams:
        return replace(self, amplitude=amplitude)


@dataclass(frozen=True)
class FieldComponents:
    """Components of the unit rotating field seen in the rotating frame."""

    bx: np.ndarray | float
    by: np.ndarray | float


@dataclass(frozen=True)
class SeriesTruncation:
    """Truncation policy for the Bessel/Fourier series in ``nu = 2A/omega``.

    Bessel orders up to ``nu + extra_orders + 10 nu^(1/3)`` are kept, then
    trailing orders beyond ``nu`` whose magnitude is below ``cutoff`` are
    dropped. The ``nu^(1/3)`` term follows the width of the turning-point
    region of ``J_k(nu)``, which matters once ``nu`` exceeds ~50.
    """

    extra_orders: int = 40
    cutoff: float = 1e-14

    def __post_init__(self):
        if self.extra_orders < 1 or self.cutoff <= 0:
            raise ValueError("invalid series truncation policy")

    def coefficients(self, nu: float) -> np.ndarray:
        """Return ``J_0(nu) ... J_kmax(nu)`` with the policy applied."""
        kmax = int(np.floor(nu + self.extra_orders + 10 * np.cbrt(nu)))
        coeffs = bessel_j_orders(kmax, nu)
        big = np.nonzero(np.abs(coeffs) >= self.cutoff)[0]
        last = max(int(np.ceil(nu)), int(big[-1]) if big.size else 0)
        return coeffs[: min(last, kmax) + 1]


DEFAULT_TRUNCATION = SeriesTruncation()


def check_hermitian(h: np.ndarray, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate a square (or stacked square) Hermitian matrix and return it."""
    h = np.asarray(h)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise DimensionMismatchError(f"expected square matrices, got shape {h.shape}")
    dev = np.abs(h - np.conj(np.swapaxes(h, -1, -2)))
    worst = float(dev.max()) if dev.size else 0.0
    if worst > atol:
        raise NonHermitianError(f"matrix is not Hermitian: max |H - H^dag| = {worst:.3e} > {atol:.0e}")
    return h


def _stack(coef_i, coef_x, coef_y, coef_z) -> np.ndarray:
    """Build ``c_i I + c_x sx + c_y sy + c_z sz`` broadcasting over the coefficients."""
    ci, cx, cy, cz = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (coef_i, coef_x, coef_y, coef_z)))
    out = np.empty(ci.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = ci + cz
    out[..., 1, 1] = ci - cz
    out[..., 0, 1] = cx - 1j * cy
    out[..., 1, 0] = cx + 1j * cy
    return out


def field(p: DriveParams, t):
    """Instantaneous control field ``dc_offset + A cos(omega t)``."""
    return p.dc_offset + p.amplitude * np.cos(p.omega * np.asarray(t, dtype=float))


def hamiltonian(p: DriveParams, t) -> np.ndarray:
    """``(delta/2) sx + eps(t) sz``; an array of times gives a stack of shape (n, 2, 2)."""
    return _stack(0.0, p.delta / 2, 0.0, field(p, t))


def gamma_z(p: DriveParams, t):
    """Rotating-frame phase ``2 * int_0^t A cos(omega s) ds = (2A/omega) sin(omega t)``.

    The dc offset is deliberately excluded; multi-level callers absorb it
    into the static part of their Hamiltonian.
    """
    return p.nu * np.sin(p.omega * np.asarray(t, dtype=float))


def rotating_frame_unitary(p: DriveParams, t) -> np.ndarray:
    """``U1(t) = exp(-i gamma_z(t) sz / 2)``."""
    g = np.asarray(gamma_z(p, t))
    out = np.zeros(g.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(-0.5j * g)
    out[..., 1, 1] = np.exp(0.5j * g)
    return out


def rotating_frame_hamiltonian(p: DriveParams, t) -> np.ndarray:
    """Generator of ``U2`` in ``U = U1 U2``: ``U1^dag (delta/2) sx U1``.

    Evaluates to ``(delta/2)(cos(gamma_z) sx - sin(gamma_z) sy)``. The field
    direction rotates in the x-y plane with constant magnitude, so the
    eigenvalues are ``+-delta/2`` at all times.
    """
    g = np.asarray(gamma_z(p, t))
    half = p.delta / 2
    return _stack(0.0, half * np.cos(g), -half * np.sin(g), 0.0)


def field_components(p: DriveParams, t, truncation: SeriesTruncation = DEFAULT_TRUNCATION) -> FieldComponents:
    """Fourier/Bessel series for ``(cos gamma_z, sin gamma_z)``.

    ``cos(nu sin wt) = J0(nu) + 2 sum_n J_2n(nu) cos(2n wt)`` and
    ``sin(nu sin wt) = 2 sum_n J_(2n-1)(nu) sin((2n-1) wt)``.
    """
    coeffs = truncation.coefficients(p.nu)
    phase = p.omega * np.asarray(t, dtype=float)
    orders = np.arange(coeffs.size)
    even = orders[2::2]
    odd = orders[1::2]
    bx = coeffs[0] + 2 * np.sum(coeffs[even] * np.cos(np.multiply.outer(phase, even)), axis=-1)
    by = 2 * np.sum(coeffs[odd] * np.sin(np.multiply.outer(phase, odd)), axis=-1)
    if np.ndim(bx) == 0:
        bx, by = float(bx), float(by)
    return FieldComponents(bx, by)


def instantaneous_levels(p: DriveParams, t) -> np.ndarray:
    """Adiabatic eigenvalues ``+-sqrt(delta^2/4 + eps(t)^2)``, shape ``(..., 2)``."""
    half = np.sqrt(p.delta**2 / 4 + field(p, t) ** 2)
    return np.stack([-half, half], axis=-1)
