"""Unitary time evolution with the exponential midpoint rule.

Each step of length ``h`` applies ``exp(-i H(t_mid) h)``, the second-order
Magnus integrator. Every step is an exact exponential of a Hermitian
matrix, so the result is unitary to round-off regardless of step size; the
global error is O(h^2).

Generators are callables ``t -> H``. When called with a 1-D array of times
they may return a stack of shape ``(n, dim, dim)``; scalar-only callables are
detected and evaluated point by point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, NonHermitianError, NumericalFault

Generator = Callable[[np.ndarray], np.ndarray]

GENERATOR_HERMITIAN_ATOL = 1e-10
UNITARY_ATOL = 1e-10
DEFAULT_STEPS_TLS = 4096
DEFAULT_STEPS_MULTILEVEL = 8192
MIN_STEPS_PER_PERIOD = 64
# Bounds memory use: step unitaries are materialized in chunks of this size.
_CHUNK = 1 << 16


@dataclass(frozen=True)
class PropagationGrid:
    """Uniform time grid on ``[t0, t1]``.

    The step count is ``ceil((t1 - t0) / period * steps_per_period)``, so
    ``steps_per_period`` is an upper bound on the step density and whole
    periods are resolved with exactly that many steps.
    """

    t0: float
    t1: float
    steps_per_period: int = DEFAULT_STEPS_TLS
    sample_stride: int = 1
    period: float = 2 * np.pi

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"grid needs t1 > t0, got [{self.t0}, {self.t1}]")
        if self.steps_per_period < MIN_STEPS_PER_PERIOD:
            raise ValueError(f"steps_per_period must be >= {MIN_STEPS_PER_PERIOD}")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def n_steps(self) -> int:
        ratio = (self.t1 - self.t0) / self.period * self.steps_per_period
        return max(1, int(np.ceil(ratio - 1e-9)))

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    def midpoints(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        stop = self.n_steps if stop is None else stop
        return self.t0 + (np.arange(start, stop) + 0.5) * self.step

    def refined(self, factor: int) -> PropagationGrid:
        return PropagationGrid(self.t0, self.t1, self.steps_per_period * factor, self.sample_stride * factor, self.period)


def check_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> float:
    """Return ``max |U^dag U - I|``; raise if it exceeds ``atol``."""
    u = np.asarray(u)
    dim = u.shape[-1]
    dev = np.abs(np.conj(np.swapaxes(u, -1, -2)) @ u - np.eye(dim)).max()
    if dev > atol:
        raise NumericalFault(f"operator is not unitary: max |U^dag U - I| = {dev:.3e}")
    return float(dev)


def _expm_2x2(h: np.ndarray, dt: float) -> np.ndarray:
    # H = a0 I + a . sigma  ->  exp(-i H dt) = e^{-i a0 dt} (cos(r dt) I - i sin(r dt) a.sigma / r)
    a0 = 0.5 * (h[..., 0, 0] + h[..., 1, 1]).real
    az = 0.5 * (h[..., 0, 0] - h[..., 1, 1]).real
    ax = h[..., 1, 0].real
    ay = h[..., 1, 0].imag
    r = np.sqrt(ax * ax + ay * ay + az * az)
    c = np.cos(r * dt)
    safe = np.where(r > 0, r, 1.0)
    s = np.where(r > 0, np.sin(r * dt) / safe, dt)
    phase = np.exp(-1j * a0 * dt)
    out = np.empty(h.shape, dtype=complex)
    out[..., 0, 0] = phase * (c - 1j * s * az)
    out[..., 1, 1] = phase * (c + 1j * s * az)
    out[..., 0, 1] = phase * (-1j * s * (ax - 1j * ay))
    out[..., 1, 0] = phase * (-1j * s * (ax + 1j * ay))
    return out


def matrix_exp_skew(h: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i H dt)`` for a Hermitian ``H`` (or a stack of them).

    Two-level matrices use the closed form; larger ones use ``eigh``.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise DimensionMismatchError(f"expected square matrices, got shape {h.shape}")
    if h.shape[-1] == 2:
        return _expm_2x2(h, dt)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalFault(f"eigendecomposition failed: {exc}") from exc
    return (v * np.exp(-1j * w * dt)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def ordered_product(us: np.ndarray) -> np.ndarray:
    """Time-ordered product ``U_{n-1} ... U_1 U_0`` of a stack along axis -3.

    Pairwise (tree) reduction; leading axes are batch axes.
    """
    us = np.asarray(us)
    dim = us.shape[-1]
    while us.shape[-3] > 1:
        if us.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(dim, dtype=us.dtype), us.shape[:-3] + (1, dim, dim))
            us = np.concatenate([us, eye], axis=-3)
        us = us[..., 1::2, :, :] @ us[..., 0::2, :, :]
    return us[..., 0, :, :]


def sample_generator(generator: Generator, times: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Evaluate a generator on an array of times, returning a checked stack."""
    times = np.asarray(times, dtype=float)
    try:
        hs = np.asarray(generator(times))
    except (TypeError, ValueError):
        # callable that only accepts scalar times
        hs = np.empty((0, 0))
    if hs.ndim == 2 and times.size != 1:
        samples = [np.asarray(generator(float(t))) for t in times]
        shapes = {m.shape for m in samples}
        if len(shapes) != 1:
            raise DimensionMismatchError(f"generator returned differing shapes {sorted(shapes)}")
        hs = np.stack(samples)
    elif hs.ndim == 2:
        hs = hs[None]
    if hs.ndim != 3 or hs.shape[0] != times.size or hs.shape[1] != hs.shape[2]:
        raise DimensionMismatchError(f"generator returned shape {hs.shape} for {times.size} sample times")
    if dim is not None and hs.shape[-1] != dim:
        raise DimensionMismatchError(f"generator dimension changed from {dim} to {hs.shape[-1]}")
    dev = np.abs(hs - np.conj(np.swapaxes(hs, -1, -2))).max()
    if dev > GENERATOR_HERMITIAN_ATOL:
        raise NonHermitianError(f"generator sample is not Hermitian (max deviation {dev:.3e})")
    return hs


def _chunks(grid: PropagationGrid, size: int):
    for start in range(0, grid.n_steps, size):
        yield start, min(start + size, grid.n_steps)


def propagate(generator: Generator, grid: PropagationGrid) -> np.ndarray:
    """Evolution operator ``U(t1, t0)`` on the given grid."""
    total = None
    dim = None
    for start, stop in _chunks(grid, _CHUNK):
        hs = sample_generator(generator, grid.midpoints(start, stop), dim)
        dim = hs.shape[-1]
        piece = ordered_product(matrix_exp_skew(hs, grid.step))
        total = piece if total is None else piece @ total
    return total


def evolve_state(generator: Generator, psi0, grid: PropagationGrid) -> tuple[np.ndarray, np.ndarray]:
    """Sample the trajectory ``psi(t)`` every ``grid.sample_stride`` steps.

    Returns ``(times, states)`` with ``states[k]`` the state at ``times[k]``.
    The first sample is ``psi0`` at ``t0``; the last is always at ``t1``.
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    if psi.ndim != 1:
        raise DimensionMismatchError("initial state must be a vector")
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > 1e-10:
        raise ValueError(f"initial state is not normalized (norm {norm:.12f})")
    stride = grid.sample_stride
    n = grid.n_steps
    marks = list(range(stride, n + 1, stride))
    if not marks or marks[-1] != n:
        marks.append(n)
    times = [grid.t0]
    states = [psi.copy()]
    dim = psi.size
    chunk = max(stride, (_CHUNK // stride) * stride)
    prev = 0
    for start, stop in _chunks(grid, chunk):
        hs = sample_generator(generator, grid.midpoints(start, stop), dim)
        us = matrix_exp_skew(hs, grid.step)
        local = [m for m in marks if start < m <= stop]
        for m in local:
            block = us[prev - start : m - start]
            psi = ordered_product(block) @ psi
            times.append(grid.t0 + m * grid.step)
            states.append(psi)
            prev = m
    return np.array(times), np.array(states)


def self_convergence(generator: Generator, grid: PropagationGrid, factor: int = 10) -> float:
    """Max entrywise deviation of ``U(t1, t0)`` from a ``factor``-times finer run."""
    coarse = propagate(generator, grid)
    fine = propagate(generator, grid.refined(factor))
    return float(np.abs(coarse - fine).max())
