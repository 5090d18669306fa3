"""N-level systems driven through an avoided crossing.

A system is a pair of Hermitian operators ``(h0, d)`` with
``H(eps) = h0 + eps * d``. Near an avoided crossing (AC) of two levels the
dynamics reduce to the two-level model: the AC gap plays the role of
``delta`` and the field is measured from the AC center.

Populations of driven runs are reported on a fixed basis built at the AC
center: the two *diabatic* AC states (eigenvectors of ``d`` restricted to the
AC pair, i.e. the states whose energies cross with definite slopes) plus the
spectator eigenstates of ``H(eps_center)``. For the two-level embedding
``h0 = (delta/2) sx, d = sz`` these are exactly the ``|0>, |1>`` states of the
two-level model. ``basis="center"`` selects the plain eigenbasis instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import analytic_model as am
from .errors import DimensionMismatchError, NonHermitianError, NumericalFault, SchemaError
from .floquet import QuasienergyPoint, circle_gap, fold, monodromy, spectrum_sweep, track
from .propagator import DEFAULT_STEPS_MULTILEVEL, PropagationGrid, evolve_state
from .tls_model import DriveParams

INGEST_HERMITIAN_ATOL = 1e-10
GAP_VERIFY_RTOL = 1e-2
GAP_CONTAMINATION_RTOL = 0.1
AMBIGUOUS_WEIGHT = 0.5

_FIELDS = ("dim", "h0", "d", "labels", "units")


@dataclass(frozen=True, eq=False)
class MultiLevelSystem:
    """Field-free Hamiltonian ``h0`` and drive coupling ``d`` of equal dimension."""

    h0: np.ndarray
    d: np.ndarray
    labels: tuple[str, ...] | None = None
    units: dict | None = None

    def __post_init__(self):
        h0 = np.array(self.h0, dtype=complex)
        d = np.array(self.d, dtype=complex)
        for name, m in (("h0", h0), ("d", d)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionMismatchError(f"{name} must be a square matrix, got shape {m.shape}")
        if h0.shape != d.shape:
            raise DimensionMismatchError(f"h0 is {h0.shape} but d is {d.shape}")
        if h0.shape[0] < 2:
            raise DimensionMismatchError("a system needs at least two levels")
        for name, m in (("h0", h0), ("d", d)):
            dev = np.abs(m - m.conj().T).max()
            if dev > INGEST_HERMITIAN_ATOL:
                raise NonHermitianError(f"{name} is not Hermitian: max |M - M^dag| = {dev:.3e}")
        if self.labels is not None and len(self.labels) != h0.shape[0]:
            raise DimensionMismatchError(f"{len(self.labels)} labels for {h0.shape[0]} levels")
        h0.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "d", d)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    def hamiltonian(self, eps):
        """``h0 + eps d``; an array of fields gives a stack."""
        eps = np.asarray(eps, dtype=float)
        return self.h0 + eps[..., None, None] * self.d

    def driven(self, dc: float, amplitude: float, omega: float):
        """Generator ``t -> h0 + (dc + amplitude cos(omega t)) d``."""

        def generator(t):
            return self.hamiltonian(dc + amplitude * np.cos(omega * np.asarray(t, dtype=float)))

        return generator


def two_level_embedding(delta: float) -> MultiLevelSystem:
    """The two-level model written as a multi-level system."""
    return MultiLevelSystem(np.array([[0, delta / 2], [delta / 2, 0]]), np.diag([1.0, -1.0]), ("0", "1"))


# -- serialization ----------------------------------------------------------


def _pairs(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _fmt(x: float) -> str:
    return format(x, ".16e")


def dumps_system(sys: MultiLevelSystem) -> str:
    """Canonical text form: fixed key order, 17 significant digits, one row per line."""

    def matrix(m):
        rows = ["[" + ", ".join(f"[{_fmt(z.real)}, {_fmt(z.imag)}]" for z in row) + "]" for row in m]
        return "[\n    " + ",\n    ".join(rows) + "\n  ]"

    parts = [f'  "dim": {sys.dim}', f'  "h0": {matrix(sys.h0)}', f'  "d": {matrix(sys.d)}']
    if sys.labels is not None:
        parts.append(f'  "labels": {json.dumps(list(sys.labels), ensure_ascii=False)}')
    if sys.units is not None:
        parts.append(f'  "units": {json.dumps(sys.units, sort_keys=True, ensure_ascii=False)}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def save_system(sys: MultiLevelSystem, path) -> None:
    Path(path).write_text(dumps_system(sys), encoding="utf-8")


def _matrix_from_doc(doc: dict, key: str, dim: int) -> np.ndarray:
    raw = doc.get(key)
    if not isinstance(raw, list) or len(raw) != dim:
        raise SchemaError(f"'{key}' must be a list of {dim} rows")
    out = np.empty((dim, dim), dtype=complex)
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != dim:
            raise SchemaError(f"'{key}' row {i} must have {dim} entries")
        for j, z in enumerate(row):
            ok = isinstance(z, list) and len(z) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in z)
            if not ok:
                raise SchemaError(f"'{key}'[{i}][{j}] must be a [real, imaginary] pair, got {z!r}")
            out[i, j] = complex(z[0], z[1])
    return out


def loads_system(text: str) -> MultiLevelSystem:
    """Parse a system description document.

    Raises:
        SchemaError: malformed JSON or fields.
        DimensionMismatchError: matrices disagree with ``dim``.
        NonHermitianError: a matrix is not Hermitian within 1e-10.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed document at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    unknown = set(doc) - set(_FIELDS)
    if unknown:
        raise SchemaError(f"unknown fields: {sorted(unknown)}")
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
        raise SchemaError("'dim' must be an integer >= 2")
    for key in ("h0", "d"):
        raw = doc.get(key)
        if isinstance(raw, list) and len(raw) != dim:
            raise DimensionMismatchError(f"'{key}' has {len(raw)} rows but dim is {dim}")
    h0 = _matrix_from_doc(doc, "h0", dim)
    d = _matrix_from_doc(doc, "d", dim)
    labels = doc.get("labels")
    if labels is not None and (not isinstance(labels, list) or not all(isinstance(s, str) for s in labels)):
        raise SchemaError("'labels' must be a list of strings")
    units = doc.get("units")
    if units is not None and not isinstance(units, dict):
        raise SchemaError("'units' must be an object")
    return MultiLevelSystem(h0, d, tuple(labels) if labels is not None else None, units)


def load_system(source) -> MultiLevelSystem:
    """Load from a path; JSON text is also accepted directly."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot read system file {source}: {exc}") from exc
        return loads_system(text)
    return loads_system(source)


# -- synthetic systems ------------------------------------------------------


@dataclass(frozen=True)
class SyntheticACSpec:
    """Recipe for a test system with one engineered avoided crossing.

    The AC pair has diabatic slopes ``slopes`` and is coupled to open a gap
    ``gap`` at ``eps_center``. Spectator levels sit at ``spectator_offsets``
    (multiples of the gap) from the AC at the center, with slopes
    ``spectator_slopes`` and coupling ``spectator_coupling`` (times the gap)
    to both AC states and to their neighbours.
    """

    dim: int = 8
    gap: float = 0.15
    slopes: tuple[float, float] = (1.0, -1.0)
    eps_center: float = 0.0
    spectator_offsets: tuple[float, ...] | None = None
    spectator_slopes: tuple[float, ...] | None = None
    spectator_coupling: float = 0.3

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not self.gap > 0:
            raise ValueError("gap must be positive")
        if self.slopes[0] == self.slopes[1]:
            raise ValueError("AC slopes must differ")
        n = self.dim - 2
        for name in ("spectator_offsets", "spectator_slopes"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"{name} needs {n} entries")

    def offsets(self) -> np.ndarray:
        if self.spectator_offsets is not None:
            return np.asarray(self.spectator_offsets, dtype=float)
        k = np.arange(self.dim - 2)
        # +50, -50, +90, -90, ...
        return np.where(k % 2 == 0, 1.0, -1.0) * (50.0 + 40.0 * (k // 2))

    def spectator_slope_values(self) -> np.ndarray:
        if self.spectator_slopes is not None:
            return np.asarray(self.spectator_slopes, dtype=float)
        s = max(abs(self.slopes[0]), abs(self.slopes[1]))
        k = np.arange(self.dim - 2)
        return np.where((k // 2) % 2 == 0, 1.0, -1.0) * np.where(k % 2 == 0, 1.0, -1.0) * s


DEFAULT_SYNTHETIC = SyntheticACSpec()


def _assemble(spec: SyntheticACSpec, coupling: float) -> MultiLevelSystem:
    n = spec.dim
    g = spec.gap
    s_lo, s_hi = sorted(spec.slopes)
    slopes = np.concatenate([[s_hi, s_lo], spec.spectator_slope_values()])
    offsets = np.concatenate([[0.0, 0.0], spec.offsets() * g])
    d = np.diag(slopes)
    # energies at the center are the offsets, so h0 = offsets - eps_center * slopes
    h0 = np.diag(offsets - spec.eps_center * slopes).astype(complex)
    h0[0, 1] = h0[1, 0] = coupling / 2
    c = spec.spectator_coupling * g
    order = np.argsort(offsets[2:]) + 2
    for k in range(2, n):
        h0[0, k] = h0[k, 0] = c
        h0[1, k] = h0[k, 1] = c
    for a, b in zip(order[:-1], order[1:]):
        h0[a, b] = h0[b, a] = c
    labels = ("ac+", "ac-", *(f"s{k}" for k in range(n - 2)))
    return MultiLevelSystem(h0, d, labels)


def _center_gap(sys: MultiLevelSystem, eps: float) -> float:
    w = np.linalg.eigvalsh(sys.hamiltonian(eps))
    return float(np.min(np.diff(w)))


def synthetic_ac(spec: SyntheticACSpec = DEFAULT_SYNTHETIC) -> MultiLevelSystem:
    """Build the system described by ``spec`` and verify its AC gap.

    Spectators shift the engineered gap slightly; the pair coupling is
    re-tuned until the measured minimal gap matches ``spec.gap`` to 0.1%.

    Raises:
        NumericalFault: when spectators change the gap by more than 10%
            or the re-tuned gap is still off by more than 1%.
    """
    coupling = spec.gap
    sys = _assemble(spec, coupling)
    measured = _ac_gap_near(sys, spec.eps_center, spec.gap)
    if abs(measured - spec.gap) > GAP_CONTAMINATION_RTOL * spec.gap:
        raise NumericalFault(f"spectator levels distort the engineered gap: {measured:.6g} vs {spec.gap:.6g}")
    for _ in range(20):
        if abs(measured - spec.gap) <= 1e-3 * spec.gap:
            break
        coupling *= spec.gap / measured
        sys = _assemble(spec, coupling)
        measured = _ac_gap_near(sys, spec.eps_center, spec.gap)
    if abs(measured - spec.gap) > GAP_VERIFY_RTOL * spec.gap:
        raise NumericalFault(f"could not tune the engineered gap: {measured:.6g} vs {spec.gap:.6g}")
    return sys


def _ac_gap_near(sys: MultiLevelSystem, eps0: float, width: float) -> float:
    res = minimize_scalar(partial(_center_gap, sys), bounds=(eps0 - width, eps0 + width), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(eps0))})
    return float(res.fun)


# -- static spectrum and AC detection ---------------------------------------


@dataclass
class StaticSpectrum:
    """Sorted eigenvalues of ``h0 + eps d`` on a field grid, shape (n_eps, dim)."""

    eps: np.ndarray
    energies: np.ndarray
    system: MultiLevelSystem | None = None


def static_spectrum(sys: MultiLevelSystem, eps_grid: Sequence[float]) -> StaticSpectrum:
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size == 0:
        raise ValueError("eps_grid must be a non-empty 1-D array")
    try:
        energies = np.linalg.eigvalsh(sys.hamiltonian(eps))
    except np.linalg.LinAlgError as exc:
        raise NumericalFault(f"eigensolver failed: {exc}") from exc
    return StaticSpectrum(eps, energies, sys)


@dataclass(frozen=True)
class ACDescriptor:
    """An avoided crossing between adjacent levels ``level_pair``.

    ``slopes`` are the diabatic slopes ``(lower, upper)``: eigenvalues of
    ``d`` restricted to the AC pair at the center.
    """

    eps_center: float
    gap: float
    level_pair: tuple[int, int]
    slopes: tuple[float, float]

    def to_dict(self) -> dict:
        return {"eps_center": self.eps_center, "gap": self.gap, "level_pair": list(self.level_pair), "slopes": list(self.slopes)}


def _pair_vectors(sys: MultiLevelSystem, eps: float, pair: tuple[int, int]) -> np.ndarray:
    _, v = np.linalg.eigh(sys.hamiltonian(eps))
    return v[:, list(pair)]


def _pair_gap(sys: MultiLevelSystem, lower: int, eps: float) -> float:
    w = np.linalg.eigvalsh(sys.hamiltonian(eps))
    return float(w[lower + 1] - w[lower])


def _parabola_min(x, y) -> tuple[float, float]:
    y0, y1, y2 = y
    h = x[1] - x[0]
    denom = y0 - 2 * y1 + y2
    if denom <= 0:
        return float(x[1]), float(y1)
    off = 0.5 * h * (y0 - y2) / denom
    return float(x[1] + off), float(y1 - 0.25 * (y0 - y2) * off / h)


def find_acs(table: StaticSpectrum, max_gap: float, min_gap: float = 0.0, refine: bool = True) -> list[ACDescriptor]:
    """Local minima of adjacent-level gaps below ``max_gap``.

    Centers and gaps come from a parabola through the grid minimum and its
    neighbours. With ``refine`` and a system attached to the table, the
    minimum is then located on the exact gap function within one grid step.
    Diabatic slopes come from ``d`` restricted to the AC pair.
    """
    eps, energies = table.eps, table.energies
    if eps.size < 3:
        return []
    gaps = np.diff(energies, axis=1)
    found = []
    for lower in range(gaps.shape[1]):
        g = gaps[:, lower]
        for i in range(1, eps.size - 1):
            if not (g[i] <= g[i - 1] and g[i] < g[i + 1]):
                continue
            if g[i] > max_gap:
                continue
            center, gap = _parabola_min(eps[i - 1 : i + 2], g[i - 1 : i + 2])
            sys = table.system
            if refine and sys is not None:
                res = minimize_scalar(partial(_pair_gap, sys, lower), bounds=(eps[i - 1], eps[i + 1]), method="bounded",
                                      options={"xatol": 1e-13 * max(1.0, abs(eps[i]))})
                center, gap = float(res.x), float(res.fun)
                v = _pair_vectors(sys, center, (lower, lower + 1))
                slopes = tuple(float(s) for s in np.linalg.eigvalsh(v.conj().T @ sys.d @ v))
            else:
                lo = max(i - 3, 0)
                hi = min(i + 3, eps.size - 1)
                s_a = (energies[lo, lower] - energies[lo + 1, lower]) / (eps[lo] - eps[lo + 1])
                s_b = (energies[hi, lower] - energies[hi - 1, lower]) / (eps[hi] - eps[hi - 1])
                slopes = tuple(sorted((float(s_a), float(s_b))))
            if gap < min_gap or not gap > 0:
                continue
            found.append(ACDescriptor(center, gap, (lower, lower + 1), slopes))
    return sorted(found, key=lambda a: (a.eps_center, a.level_pair))


@dataclass(frozen=True)
class EffectiveTLS:
    """Two-level parameters of an AC.

    ``delta`` is the AC gap and ``dc_offset`` the AC center in field units.
    ``field_scale = (s_hi - s_lo) / 2`` converts a field amplitude into the
    two-level amplitude ``A`` of ``A cos(omega t) sz``. The resonant choice
    ``omega = delta`` is offered as ``recommended_omega``.
    """

    delta: float
    dc_offset: float
    field_scale: float

    @property
    def recommended_omega(self) -> float:
        return self.delta

    def drive_params(self, omega: float | None = None, amp_ratio: float = 0.0) -> DriveParams:
        """Two-level parameters for a drive ``A/omega`` around the AC center."""
        omega = self.recommended_omega if omega is None else omega
        return DriveParams.from_ratio(self.delta, omega, amp_ratio)

    def field_amplitude(self, amplitude: float) -> float:
        """Field amplitude producing the two-level amplitude ``amplitude``."""
        return amplitude / self.field_scale

    def peak_amplitude(self, n: int, omega: float | None = None) -> float:
        """Field amplitude for gap-maximum ``n`` (halved J1 zero) at ``omega``."""
        omega = self.recommended_omega if omega is None else omega
        return self.field_amplitude(am.special_amplitudes("peak", n)[-1] * omega)


def effective_tls(ac: ACDescriptor) -> EffectiveTLS:
    s_lo, s_hi = ac.slopes
    return EffectiveTLS(ac.gap, ac.eps_center, 0.5 * (s_hi - s_lo))


# -- driven dynamics ----------------------------------------------------------


def ac_basis(sys: MultiLevelSystem, ac: ACDescriptor, basis: str = "diabatic") -> np.ndarray:
    """Orthonormal basis at the AC center, columns ``[ac+, ac-, spectators...]``.

    ``ac+`` is the AC state whose energy rises with the field (the two-level
    ``|0>``). With ``basis="center"`` the AC columns are instead the upper and
    lower eigenstates of ``H(eps_center)``.
    """
    w, v = np.linalg.eigh(sys.hamiltonian(ac.eps_center))
    lo, hi = ac.level_pair
    pair = v[:, [hi, lo]]
    if basis == "diabatic":
        s, rot = np.linalg.eigh(pair.conj().T @ sys.d @ pair)
        pair = pair @ rot[:, ::-1]
        # real, positive coupling between the two diabatic states
        h01 = (pair[:, 0].conj() @ sys.hamiltonian(ac.eps_center) @ pair[:, 1])
        if abs(h01) > 0:
            pair[:, 1] *= np.conj(h01) / abs(h01)
    elif basis != "center":
        raise ValueError(f"basis must be 'diabatic' or 'center', got {basis!r}")
    rest = [k for k in range(sys.dim) if k not in (lo, hi)]
    return np.concatenate([pair, v[:, rest]], axis=1)


@dataclass
class DrivenPopulations:
    """Populations on the AC basis; column 0 is ``ac+``, column 1 ``ac-``."""

    times: np.ndarray
    populations: np.ndarray
    labels: list[str]
    basis: str
    params: DriveParams
    field_amplitude: float

    @property
    def leakage(self) -> np.ndarray:
        return 1.0 - self.populations[:, 0] - self.populations[:, 1]


def driven_dynamics(sys: MultiLevelSystem, ac: ACDescriptor, amplitude: float, omega: float, psi0="ac+",
                    horizon: float | None = None, basis: str = "diabatic",
                    steps_per_period: int = DEFAULT_STEPS_MULTILEVEL, sample_stride: int = 1) -> DrivenPopulations:
    """Evolve under ``h0 + (eps_center + amplitude cos(omega t)) d``.

    ``amplitude`` is in field units. ``psi0`` is ``"ac+"``/``"ac-"`` (the basis
    states of the chosen basis) or an explicit state vector. The horizon
    defaults to 1.2 times the flip time of the effective two-level model.
    """
    eff = effective_tls(ac)
    params = DriveParams(eff.delta, omega, amplitude * eff.field_scale)
    b = ac_basis(sys, ac, basis)
    if isinstance(psi0, str):
        index = {"ac+": 0, "ac-": 1}.get(psi0)
        if index is None:
            raise ValueError(f"psi0 must be 'ac+', 'ac-' or a vector, got {psi0!r}")
        psi = b[:, index]
    else:
        psi = np.asarray(psi0, dtype=complex)
        if psi.shape != (sys.dim,):
            raise DimensionMismatchError(f"psi0 has shape {psi.shape}, expected ({sys.dim},)")
    if horizon is None:
        horizon = 1.2 * am.flip_time(params)
    grid = PropagationGrid(0.0, horizon, steps_per_period, sample_stride, 2 * np.pi / omega)
    times, states = evolve_state(sys.driven(ac.eps_center, amplitude, omega), psi, grid)
    pops = np.abs(states @ b.conj()) ** 2
    lo, hi = ac.level_pair
    names = list(sys.labels) if sys.labels else [str(k) for k in range(sys.dim)]
    rest = [names[k] for k in range(sys.dim) if k not in (lo, hi)]
    return DrivenPopulations(times, pops, ["ac+", "ac-", *rest], basis, params, amplitude)


# -- multi-level Floquet sweeps ---------------------------------------------


@dataclass
class MultilevelSweep:
    """AC-pair quasienergies across an amplitude grid and their deviation from the TLS."""

    omega: float
    amp_ratios: np.ndarray
    points: list[QuasienergyPoint]
    tls_gap: np.ndarray
    weights: np.ndarray
    flagged: np.ndarray
    distortion: float

    @property
    def gap(self) -> np.ndarray:
        return np.array([p.gap for p in self.points])

    @property
    def flagged_fraction(self) -> float:
        return float(self.flagged.mean()) if self.flagged.size else 0.0


def _ac_pair_point(u: np.ndarray, omega: float, amp_ratio: float, projector: np.ndarray) -> tuple[QuasienergyPoint, float]:
    from scipy.linalg import schur

    tri, modes = schur(u, output="complex")
    eps = fold(-np.angle(np.diag(tri)) * omega / (2 * np.pi), omega)
    eps = np.atleast_1d(eps)
    weight = np.real(np.einsum("ik,ij,jk->k", modes.conj(), projector, modes))
    pick = np.sort(np.argsort(weight)[::-1][:2])
    sel = eps[pick]
    split = float(sel[0] - sel[1])
    pt = QuasienergyPoint(float(amp_ratio), float(omega), sel, modes[:, pick], float(circle_gap(split, omega)), split)
    return pt, float(np.sort(weight[pick])[0])


def floquet_sweep_multilevel(sys: MultiLevelSystem, ac: ACDescriptor, omega: float, amp_ratios: Sequence[float],
                             steps_per_period: int = DEFAULT_STEPS_MULTILEVEL) -> MultilevelSweep:
    """Floquet spectrum of the AC pair versus ``A/omega``.

    The two Floquet modes with the largest weight on the AC subspace at the
    center are kept; a point is flagged when the smaller of the two weights
    is below 0.5. ``distortion`` is the RMS over unflagged points of
    ``|gap_N - gap_TLS| / delta_M`` with ``gap_TLS`` from the effective
    two-level model at the same ``A/omega``.
    """
    amp_ratios = np.asarray(amp_ratios, dtype=float)
    eff = effective_tls(ac)
    v = ac_basis(sys, ac, "center")[:, :2]
    projector = v @ v.conj().T
    points, weights = [], []
    for a in amp_ratios:
        gen = sys.driven(ac.eps_center, eff.field_amplitude(a * omega), omega)
        pt, w = _ac_pair_point(monodromy(gen, omega, steps_per_period), omega, a, projector)
        points.append(pt)
        weights.append(w)
    points = track(points)
    tls = spectrum_sweep(eff.delta, omega, amp_ratios, steps_per_period)
    tls_gap = np.array([p.gap for p in tls])
    weights = np.array(weights)
    flagged = weights < AMBIGUOUS_WEIGHT
    gap_n = np.array([p.gap for p in points])
    good = ~flagged
    dev = np.abs(gap_n[good] - tls_gap[good]) / eff.delta
    distortion = float(np.sqrt(np.mean(dev**2))) if dev.size else float("nan")
    return MultilevelSweep(omega, amp_ratios, points, tls_gap, weights, flagged, distortion)
