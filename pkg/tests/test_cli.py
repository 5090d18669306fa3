from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from scipy.special import j0

from floquet_transfer import __version__
from floquet_transfer.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_SCHEMA, EXIT_USAGE, main
from floquet_transfer.multilevel import MultiLevelSystem, save_system, two_level_embedding


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, k] for k, name in enumerate(header)}


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def run(*argv):
    return main([str(a) for a in argv])


# -- spectrum ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def spectrum_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("spectrum")
    assert run("spectrum", "--out", out, "--steps-per-period", 1024) == EXIT_OK
    return out


def test_spectrum_outputs(spectrum_out):
    data = read_csv(spectrum_out / "spectrum.csv")
    assert data["amp_ratio"].size == 1400
    assert np.allclose(data["rwa_gap_reference"], j0(2 * data["amp_ratio"]), rtol=1e-12, atol=1e-14)
    assert np.all(data["gap"] >= 0) and np.all(data["gap"] <= 0.5 + 1e-12)
    features = json.loads((spectrum_out / "features.json").read_text())
    assert len(features["peaks"]) >= 4
    assert len(features["degeneracies"]) >= 2


def test_spectrum_manifest(spectrum_out):
    m = manifest(spectrum_out)
    assert m["command"] == "spectrum"
    assert m["version"] == __version__
    assert m["grids"]["steps_per_period"] == 1024
    assert set(m["outputs"]) >= {"spectrum.csv", "features.json"}


@pytest.mark.parametrize(
    "extra",
    [
        ["--points", "2"],
        ["--amp-min", "3", "--amp-max", "1"],
        ["--omega", "0"],
        ["--steps-per-period", "8"],
    ],
)
def test_spectrum_usage_errors(tmp_path, extra):
    assert run("spectrum", "--out", tmp_path, *extra) == EXIT_USAGE


def test_unknown_command_is_usage_error(tmp_path):
    assert run("bogus") == EXIT_USAGE


# -- dynamics ------------------------------------------------------------------------


def test_dynamics_peak_matches_analytic(tmp_path):
    assert run("dynamics", "--peak", 2, "--analytic", "--out", tmp_path) == EXIT_OK
    m = manifest(tmp_path)
    assert m["results"]["analytic_sup_norm"] <= 0.05
    ladder = json.loads((tmp_path / "ladder.json").read_text())
    assert ladder["monotone_decreasing"]
    assert 2 <= ladder["plateau_count"] <= 4


def test_dynamics_between_peaks_non_monotone(tmp_path):
    assert run("dynamics", "--amp", 4.5, "--out", tmp_path) == EXIT_OK
    assert not json.loads((tmp_path / "ladder.json").read_text())["monotone_decreasing"]


def test_dynamics_without_drive_is_rabi(tmp_path):
    assert run("dynamics", "--amp", 0, "--bloch", "--rwa-reference", "--out", tmp_path) == EXIT_OK
    data = read_csv(tmp_path / "dynamics.csv")
    assert data["t"][-1] == pytest.approx(1.2 * np.pi)
    assert np.abs(data["pnd_numeric"] - np.cos(data["t"] / 2) ** 2).max() <= 1e-8
    assert np.abs(data["pnd_rwa"] - data["pnd_numeric"]).max() <= 1e-8
    assert np.abs(data["bloch_x"]).max() <= 1e-12
    assert "skipped" in json.loads((tmp_path / "ladder.json").read_text())


def test_dynamics_needs_one_amplitude(tmp_path):
    assert run("dynamics", "--out", tmp_path) == EXIT_USAGE
    assert run("dynamics", "--amp", 1, "--peak", 1, "--out", tmp_path) == EXIT_USAGE


def test_dynamics_at_degeneracy_is_numerical_fault(tmp_path):
    # A/omega = 0 with omega = 1 is fine; a vanishing averaged gap is not
    zero = 2.404825557695773 / 2
    assert run("dynamics", "--amp", zero, "--out", tmp_path) == EXIT_NUMERICAL


# -- scan ------------------------------------------------------------------------------


def test_scan_pnd(tmp_path):
    assert run("scan-pnd", "--amp-min", 2, "--amp-max", 5, "--points", 61, "--out", tmp_path) == EXIT_OK
    data = read_csv(tmp_path / "scan_pnd.csv")
    ok = data["skipped"] == 0
    assert ok.sum() >= 55
    assert np.all((data["pnd_at_tflip"][ok] >= -1e-10) & (data["pnd_at_tflip"][ok] <= 1 + 1e-10))
    assert np.all(np.isnan(data["pnd_at_tflip"][~ok]))


# -- multilevel ---------------------------------------------------------------------------


def test_multilevel_schema_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert run("multilevel", "--system", bad, "--find-acs", "--out", tmp_path / "o") == EXIT_SCHEMA


def test_multilevel_non_hermitian_is_schema_error(tmp_path):
    path = tmp_path / "sys.json"
    save_system(two_level_embedding(1.0), path)
    doc = json.loads(path.read_text())
    doc["h0"][0][1] = [0.9, 0.0]
    path.write_text(json.dumps(doc))
    assert run("multilevel", "--system", path, "--find-acs", "--out", tmp_path / "o") == EXIT_SCHEMA


def test_multilevel_no_crossing_is_numerical_fault(tmp_path):
    path = tmp_path / "sys.json"
    save_system(MultiLevelSystem(np.diag([0.0, 5.0]), np.eye(2)), path)
    assert run("multilevel", "--system", path, "--drive", "--peak", 1, "--out", tmp_path / "o") == EXIT_NUMERICAL


def test_multilevel_needs_one_action(tmp_path):
    assert run("multilevel", "--synthetic", "default", "--out", tmp_path) == EXIT_USAGE
    assert run("multilevel", "--synthetic", "dim=4,bogus=1", "--find-acs", "--out", tmp_path) == EXIT_USAGE
    assert run("multilevel", "--synthetic", "default", "--floquet-sweep", "--omega-mult", "a,b", "--out", tmp_path) == EXIT_USAGE


def test_multilevel_find_acs_and_save(tmp_path):
    assert run("multilevel", "--synthetic", "dim=6,gap=0.1", "--find-acs", "--max-gap", 0.3,
               "--save-system", "--out", tmp_path) == EXIT_OK
    acs = json.loads((tmp_path / "acs.json").read_text())["acs"]
    assert len(acs) == 1
    assert acs[0]["gap"] == pytest.approx(0.1, rel=1e-2)
    assert json.loads((tmp_path / "system.json").read_text())["dim"] == 6


def test_multilevel_static_spectrum(tmp_path):
    assert run("multilevel", "--synthetic", "default", "--static-spectrum", "--eps-points", 31, "--out", tmp_path) == EXIT_OK
    data = read_csv(tmp_path / "static_spectrum.csv")
    assert data["eps"].size == 31
    assert len(data) == 9


def test_embedding_sweep_reproduces_spectrum_command(tmp_path):
    path = tmp_path / "tls.json"
    save_system(two_level_embedding(1.0), path)
    common = ["--amp-max", 7, "--points", 57, "--steps-per-period", 1024]
    assert run("spectrum", *common, "--out", tmp_path / "a") == EXIT_OK
    assert run("multilevel", "--system", path, "--floquet-sweep", "--eps-min", -1, "--eps-max", 1,
               "--eps-points", 201, *common, "--out", tmp_path / "b") == EXIT_OK
    a = read_csv(tmp_path / "a" / "spectrum.csv")
    b = read_csv(tmp_path / "b" / "floquet_omega_1.csv")
    assert np.abs(a["gap"] - b["gap"]).max() <= 1e-9
    assert manifest(tmp_path / "b")["results"]["distortion"][0] <= 1e-6


def test_synthetic_drive_at_peak(tmp_path):
    assert run("multilevel", "--synthetic", "default", "--drive", "--peak", 4, "--out", tmp_path) == EXIT_OK
    r = manifest(tmp_path)["results"]
    assert r["tls_sup_norm"] <= 0.1
    assert r["max_leakage"] <= 0.05
    data = read_csv(tmp_path / "populations.csv")
    assert {"pop_ac+", "pop_ac-", "leakage", "tls_analytic_pnd"} <= set(data)


# -- determinism -----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv, name",
    [
        (["spectrum", "--points", 120, "--steps-per-period", 512], "spectrum.csv"),
        (["dynamics", "--amp", 2.3, "--analytic", "--bloch"], "dynamics.csv"),
        (["scan-pnd", "--points", 40], "scan_pnd.csv"),
        (["multilevel", "--synthetic", "dim=4", "--floquet-sweep", "--points", 12, "--steps-per-period", 512,
          "--omega-mult", "1,20"], "floquet_omega_20.csv"),
    ],
)
def test_repeated_runs_byte_identical(tmp_path, argv, name):
    assert run(*argv, "--out", tmp_path / "r1") == EXIT_OK
    assert run(*argv, "--out", tmp_path / "r2") == EXIT_OK
    assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
