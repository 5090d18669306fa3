from __future__ import annotations

import numpy as np
import pytest

from floquet_transfer import analytic_model as am
from floquet_transfer.dynamics import (
    STEP_PHASE,
    ProbabilityTrace,
    bloch_trajectory,
    compare_analytic,
    detect_steps,
    evolution_operator,
    flip_time_from_spectrum,
    inversion_window_min,
    non_decay_trace,
    pnd_at,
    scan_pnd,
    step_times,
)
from floquet_transfer.errors import DimensionMismatchError, DivergentFlipTimeError
from floquet_transfer.floquet import QuasienergyPoint, tls_quasienergy_point
from floquet_transfer.propagator import PropagationGrid, propagate
from floquet_transfer.tls_model import DriveParams, hamiltonian

from conftest import MEASURED_PEAKS


def peak_params(n):
    return DriveParams.from_ratio(1.0, 1.0, MEASURED_PEAKS[n - 1])


def floquet_flip_time(p):
    return flip_time_from_spectrum(tls_quasienergy_point(p))


# -- traces ------------------------------------------------------------------


def test_rabi_trace():
    p = DriveParams(1.0, 1.0, 0.0)
    tr = non_decay_trace(p, horizon=4 * np.pi)
    assert tr.pnd[0] == 1.0
    assert np.abs(tr.pnd - np.cos(tr.times / 2) ** 2).max() <= 1e-8


def test_default_horizon_and_bounds():
    p = peak_params(3)
    tr = non_decay_trace(p, sample_stride=4)
    assert tr.times[-1] == pytest.approx(1.2 * am.flip_time(p))
    assert tr.pnd.min() >= -1e-10 and tr.pnd.max() <= 1 + 1e-10
    assert len(tr) == tr.times.size


def test_trace_rejects_wrong_state_dimension():
    with pytest.raises(DimensionMismatchError):
        non_decay_trace(DriveParams(1, 1, 1), psi0=np.array([1, 0, 0]), horizon=1.0)
    with pytest.raises(DimensionMismatchError):
        ProbabilityTrace(np.arange(3.0), np.ones(2), DriveParams(1, 1, 1))


@pytest.mark.parametrize("t", [0.3, 6.2831853, 17.9, 40.0])
def test_evolution_operator_by_period_powers(t):
    p = DriveParams.from_ratio(1.0, 1.0, 2.7)
    direct = propagate(lambda s: hamiltonian(p, s), PropagationGrid(0.0, t, 4096, period=p.period))
    assert np.abs(evolution_operator(p, t) - direct).max() <= 1e-9


@pytest.mark.parametrize("n", [2, 3])
def test_transfer_suppressed_at_measured_degeneracies(peaks, n):
    deg = [f for f in peaks.features if f.kind == "degeneracy"][n - 1]
    p = DriveParams.from_ratio(1.0, 1.0, deg.amp_ratio)
    tr = non_decay_trace(p, horizon=10 * p.period, sample_stride=4)
    assert tr.pnd.min() >= 0.5


@pytest.mark.parametrize("n", range(1, 7))
def test_inversion_window_at_peaks(n):
    p = peak_params(n)
    assert inversion_window_min(p, floquet_flip_time(p)) <= 2e-2


# -- steps -------------------------------------------------------------------


def test_step_count_at_peak_two():
    p = peak_params(2)
    ladder = detect_steps(non_decay_trace(p, horizon=am.flip_time(p)))
    assert abs(ladder.plateau_count - round(am.step_count_estimate(p))) <= 1
    assert ladder.monotone_decreasing


def test_step_count_at_peak_five():
    p = peak_params(5)
    ladder = detect_steps(non_decay_trace(p, horizon=am.flip_time(p)))
    assert abs(ladder.plateau_count - round(am.step_count_estimate(p))) <= 1


@pytest.mark.parametrize("n", range(1, 7))
def test_peak_ladders_are_monotone(n):
    assert detect_steps(non_decay_trace(peak_params(n))).monotone_decreasing


def test_ladder_between_peaks_not_monotone():
    ladder = detect_steps(non_decay_trace(DriveParams.from_ratio(1.0, 1.0, 4.5)))
    assert not ladder.monotone_decreasing


def test_constant_trace_single_plateau():
    p = DriveParams(1.0, 1.0, 1.0)
    t = np.linspace(0, 3 * p.period, 601)
    ladder = detect_steps(ProbabilityTrace(t, np.full_like(t, 0.7), p))
    assert ladder.plateau_count == 1
    assert ladder.monotone_decreasing
    assert ladder.plateaus[0].mean_p == pytest.approx(0.7)


def test_detect_steps_preconditions():
    p = DriveParams(1.0, 1.0, 1.0)
    t = np.linspace(0, 0.5 * p.period, 200)
    with pytest.raises(ValueError):
        detect_steps(ProbabilityTrace(t, np.ones_like(t), p))
    t = np.linspace(0, 2 * p.period, 100)
    with pytest.raises(ValueError):
        detect_steps(ProbabilityTrace(t, np.ones_like(t), p))


def test_plateaus_contiguous_and_bounded():
    p = peak_params(4)
    ladder = detect_steps(non_decay_trace(p))
    for a, b in zip(ladder.plateaus, ladder.plateaus[1:]):
        assert b.t_start == a.t_end
    assert all(0 <= pl.mean_p <= 1 for pl in ladder.plateaus)
    assert ladder.plateaus[0].t_start == 0.0


def test_boundaries_sit_on_step_times_within_one_sample():
    p = peak_params(2)
    tr = non_decay_trace(p, horizon=am.flip_time(p))
    ladder = detect_steps(tr)
    dt = tr.times[1] - tr.times[0]
    expected = step_times(p.period, tr.times[-1], STEP_PHASE)
    assert np.abs(ladder.boundaries - expected[: ladder.boundaries.size]).max() <= dt
    assert ladder.boundaries.size == expected.size


def test_offset_zero_cuts_at_field_extrema():
    p = peak_params(2)
    tr = non_decay_trace(p, horizon=am.flip_time(p))
    ladder = detect_steps(tr, offset=0.0)
    dt = tr.times[1] - tr.times[0]
    k = np.round(ladder.boundaries / (p.period / 2))
    assert np.abs(ladder.boundaries - k * p.period / 2).max() <= dt


def test_population_changes_at_field_zero_crossings():
    # Independent check of where the steps happen: the net change of P_ND over
    # short windows is concentrated around cos(wt) = 0, while across the field
    # extrema the population only oscillates without drifting.
    p = peak_params(3)
    tr = non_decay_trace(p, horizon=am.flip_time(p), sample_stride=1)
    half = p.period / 16

    def net_change(centers):
        lo = np.interp(centers - half, tr.times, tr.pnd)
        hi = np.interp(centers + half, tr.times, tr.pnd)
        return np.abs(hi - lo).sum()

    k = np.arange(1, int(tr.times[-1] / (p.period / 2)) - 1)
    crossings = net_change(k * p.period / 2 + p.period / 4)
    extrema = net_change(k * p.period / 2)
    assert crossings > 3 * extrema


def test_ladder_serializes():
    d = detect_steps(non_decay_trace(peak_params(2))).to_dict()
    assert set(d) == {"plateau_count", "monotone_decreasing", "boundaries", "plateaus", "segments"}


# -- Bloch vectors -------------------------------------------------------------


def test_bloch_trajectory():
    pts = bloch_trajectory(peak_params(2), sample_stride=16)
    assert pts[0][1:] == pytest.approx((0.0, 0.0, 1.0))
    norms = np.array([pt.x**2 + pt.y**2 + pt.z**2 for pt in pts])
    assert np.abs(norms - 1).max() <= 1e-9


def test_bloch_great_circle_without_drive():
    pts = bloch_trajectory(DriveParams(1.0, 1.0, 0.0), horizon=2 * np.pi)
    arr = np.array([(pt.x, pt.y, pt.z) for pt in pts])
    assert np.abs(arr[:, 0]).max() <= 1e-12
    t = np.array([pt.t for pt in pts])
    assert np.allclose(arr[:, 2], np.cos(t), atol=1e-8)


# -- flip time from the spectrum ----------------------------------------------


def test_flip_time_from_spectrum_examples():
    pt = QuasienergyPoint(float("nan"), 1.0, np.array([0.25, -0.25]), np.eye(2), 0.5, 0.5)
    assert flip_time_from_spectrum(pt) == pytest.approx(2 * np.pi)
    pt0 = QuasienergyPoint(float("nan"), 1.0, np.array([0.5, 0.5]), np.eye(2), 0.0, 0.0)
    with pytest.raises(DivergentFlipTimeError):
        flip_time_from_spectrum(pt0)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_flip_time_from_spectrum_close_to_averaged_gap(n):
    p = peak_params(n)
    assert floquet_flip_time(p) == pytest.approx(am.flip_time(p), rel=0.05)


def test_flip_time_end_to_end_window_at_peak_four():
    p = peak_params(4)
    assert inversion_window_min(p, floquet_flip_time(p)) <= 1e-2


@pytest.mark.xfail(strict=True, reason="pointwise P_ND at the Floquet T_F is 0.0150 for n = 4; see decisions ledger")
def test_flip_time_end_to_end_pointwise_at_peak_four():
    p = peak_params(4)
    assert pnd_at(p, floquet_flip_time(p)) <= 1e-2


# -- analytic comparison -------------------------------------------------------


def test_compare_analytic_zero_drive():
    sup, rms = compare_analytic(DriveParams(1.0, 1.0, 0.0))
    assert sup <= 1e-8 and rms <= sup


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_compare_analytic_at_peaks(n):
    sup, rms = compare_analytic(peak_params(n))
    assert sup <= 0.05


def test_compare_analytic_worse_between_peaks():
    off_peak, _ = compare_analytic(DriveParams.from_ratio(1.0, 1.0, 4.5))
    on_peak = max(compare_analytic(peak_params(n))[0] for n in (2, 3))
    assert off_peak > on_peak


# -- P_ND scan -------------------------------------------------------------------


@pytest.fixture(scope="module")
def scan():
    return scan_pnd(1.0, 1.0, np.linspace(1.0, 7.0, 301))


def test_scan_values_are_probabilities(scan):
    ok = ~scan.skipped
    assert np.all(scan.pnd[ok] >= -1e-10) and np.all(scan.pnd[ok] <= 1 + 1e-10)
    assert np.all(np.isnan(scan.pnd[scan.skipped]))


def test_scan_skips_near_degeneracies(peaks):
    deg = [f.amp_ratio for f in peaks.features if f.kind == "degeneracy"][1]
    res = scan_pnd(1.0, 1.0, np.array([deg - 0.3, deg, deg + 0.3]))
    assert res.skipped.tolist() == [False, True, False]
    assert np.isnan(res.t_flip[1])


def test_scan_flip_times_use_the_floquet_gap(scan):
    ok = ~scan.skipped
    assert np.allclose(scan.t_flip[ok], np.pi / scan.gaps[ok])


@pytest.mark.xfail(strict=True, reason="at omega = delta near-complete transfer occurs across the whole scan; see decisions ledger")
def test_low_pnd_clusters_near_peaks(scan, peaks):
    centers = np.array([f.amp_ratio for f in peaks.peaks if f.amp_ratio <= 7.25])
    low = scan.amp_ratios[(scan.pnd <= 0.05) & ~scan.skipped]
    assert np.all(np.min(np.abs(low[:, None] - centers[None, :]), axis=1) <= 0.25)
