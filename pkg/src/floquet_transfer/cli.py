"""Command-line front end: writes sweep and trajectory data as CSV plus JSON sidecars.

Every run writes a ``manifest.json`` next to its outputs recording the
parameters, grids, output files, package version and wall-clock time.
CSV bodies depend only on the flags, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import analytic_model as am
from . import dynamics as dyn
from . import multilevel as ml
from .errors import DimensionMismatchError, FeatureError, NonHermitianError, NumericalFault, SchemaError
from .floquet import find_features, measured_peaks, spectrum_sweep
from .propagator import DEFAULT_STEPS_MULTILEVEL, DEFAULT_STEPS_TLS, MIN_STEPS_PER_PERIOD
from .tls_model import DriveParams

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_SCHEMA = 4

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".15g")


def write_csv(path: Path, header: Sequence[str], columns: Sequence[Sequence]) -> None:
    rows = zip(*columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class Run:
    """Collects outputs and results for the manifest of one command."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.out = Path(args.out)
        self.params = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
        self.grids: dict = {}
        self.results: dict = {}
        self.outputs: list[str] = []
        self.started = datetime.now(timezone.utc)
        self.clock = time.perf_counter()
        self.out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "parameters": self.params,
            "grids": self.grids,
            "outputs": self.outputs,
            "results": self.results,
            "version": __version__,
            "started_utc": self.started.isoformat(),
            "duration_s": time.perf_counter() - self.clock,
        }
        write_json(self.out / "manifest.json", manifest)


# -- validation helpers ------------------------------------------------------


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise UsageError(f"--{name} must be positive and finite, got {value}")


def _amp_grid(args) -> np.ndarray:
    if args.points < 3:
        raise UsageError(f"--points must be at least 3, got {args.points}")
    if not (0 <= args.amp_min < args.amp_max):
        raise UsageError(f"need 0 <= --amp-min < --amp-max, got [{args.amp_min}, {args.amp_max}]")
    return np.linspace(args.amp_min, args.amp_max, args.points)


def _steps(args) -> int:
    if args.steps_per_period < MIN_STEPS_PER_PERIOD:
        raise UsageError(f"--steps-per-period must be at least {MIN_STEPS_PER_PERIOD}")
    return args.steps_per_period


# -- commands ----------------------------------------------------------------


def cmd_spectrum(args) -> None:
    _positive("delta", args.delta)
    _positive("omega", args.omega)
    grid = _amp_grid(args)
    spp = _steps(args)
    run = Run("spectrum", args)
    sweep = spectrum_sweep(args.delta, args.omega, grid, spp)
    features = find_features(sweep)
    ref = [am.rwa_gap(DriveParams.from_ratio(args.delta, args.omega, a)) for a in grid]
    write_csv(
        run.path("spectrum.csv"),
        ["amp_ratio", "eps_plus", "eps_minus", "gap", "rwa_gap_reference"],
        [grid, [p.eps_plus for p in sweep], [p.eps_minus for p in sweep], [p.gap for p in sweep], ref],
    )
    write_json(run.path("features.json"), _features_payload(features))
    run.grids = {"amp_ratio": [args.amp_min, args.amp_max, args.points], "steps_per_period": spp}
    run.results = {"peaks": sum(f.kind == "peak" for f in features), "degeneracies": sum(f.kind == "degeneracy" for f in features)}
    run.finish()


def _features_payload(features) -> dict:
    def rows(kind):
        return [{"label": f.label, "amp_ratio": f.amp_ratio, "gap": f.gap} for f in features if f.kind == kind]

    return {"peaks": rows("peak"), "degeneracies": rows("degeneracy")}


def _resolve_amplitude(args) -> float:
    if (args.amp is None) == (args.peak is None):
        raise UsageError("give exactly one of --amp or --peak")
    if args.amp is not None:
        if args.amp < 0:
            raise UsageError("--amp must be non-negative")
        return args.amp
    if args.peak < 1:
        raise UsageError("--peak must be >= 1")
    return measured_peaks(args.delta, args.omega, count=max(6, args.peak)).peak(args.peak).amp_ratio


def cmd_dynamics(args) -> None:
    _positive("delta", args.delta)
    _positive("omega", args.omega)
    spp = _steps(args)
    amp_ratio = _resolve_amplitude(args)
    p = DriveParams.from_ratio(args.delta, args.omega, amp_ratio)
    horizon = args.horizon
    if horizon is None:
        horizon = 1.2 * am.flip_time(p)
    _positive("horizon", horizon)
    run = Run("dynamics", args)
    times, states = dyn.evolve_tls(p, horizon, None, spp, args.sample_stride)
    pnd = np.abs(states[:, 0]) ** 2
    header, cols = ["t", "pnd_numeric"], [times, pnd]
    if args.analytic:
        header.append("pnd_analytic")
        cols.append(am.analytic_pnd(p, times))
        t_flip = am.flip_time(p)
        mask = times <= t_flip
        diff = np.abs(pnd - cols[-1])[mask]
        run.results["analytic_sup_norm"] = float(diff.max())
        run.results["analytic_rms"] = float(np.sqrt(np.mean(diff**2)))
        run.results["analytic_window"] = [0.0, float(times[mask][-1])]
    if args.bloch:
        vecs = dyn.bloch_vectors(states)
        header += ["bloch_x", "bloch_y", "bloch_z"]
        cols += [vecs[:, 0], vecs[:, 1], vecs[:, 2]]
    if args.rwa_reference:
        header += ["pnd_rwa", "cos_omega_t"]
        cols += [np.cos(am.rwa_gap(p) * times / 2) ** 2, np.cos(p.omega * times)]
    write_csv(run.path("dynamics.csv"), header, cols)
    try:
        ladder = dyn.detect_steps(dyn.ProbabilityTrace(times, pnd, p)).to_dict()
    except ValueError as exc:
        # too short or too coarse for step analysis; the trajectory is still useful
        ladder = {"skipped": str(exc)}
    write_json(run.path("ladder.json"), ladder)
    run.grids = {"horizon": horizon, "steps_per_period": spp, "sample_stride": args.sample_stride}
    run.results["amp_ratio"] = amp_ratio
    run.finish()


def cmd_scan_pnd(args) -> None:
    _positive("delta", args.delta)
    _positive("omega", args.omega)
    grid = _amp_grid(args)
    spp = _steps(args)
    floor = 1e-3 * args.omega if args.gap_floor is None else args.gap_floor
    run = Run("scan-pnd", args)
    scan = dyn.scan_pnd(args.delta, args.omega, grid, floor, spp)
    write_csv(run.path("scan_pnd.csv"), ["amp_ratio", "t_flip", "pnd_at_tflip", "skipped"],
              [grid, scan.t_flip, scan.pnd, scan.skipped])
    run.grids = {"amp_ratio": [args.amp_min, args.amp_max, args.points], "steps_per_period": spp, "gap_floor": floor}
    run.results = {"skipped": int(scan.skipped.sum())}
    run.finish()


def _parse_synthetic(text: str) -> ml.SyntheticACSpec:
    if text == "default":
        return ml.DEFAULT_SYNTHETIC
    try:
        fields = dict(item.split("=", 1) for item in text.split(","))
        kw = {}
        for key, value in fields.items():
            key = key.strip()
            if key == "dim":
                kw[key] = int(value)
            elif key in ("gap", "eps_center", "spectator_coupling"):
                kw[key] = float(value)
            elif key == "slopes":
                kw[key] = tuple(float(v) for v in value.split(":"))
            else:
                raise UsageError(f"unknown synthetic field {key!r}")
        return ml.SyntheticACSpec(**kw)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad --synthetic spec {text!r}: {exc}") from exc


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("omega multipliers must be positive")
    return values


def _system_acs(system, args):
    if not args.eps_min < args.eps_max or args.eps_points < 3:
        raise UsageError("need --eps-min < --eps-max and --eps-points >= 3")
    table = ml.static_spectrum(system, np.linspace(args.eps_min, args.eps_max, args.eps_points))
    max_gap = math.inf if args.max_gap is None else args.max_gap
    return table, ml.find_acs(table, max_gap)


def _select_ac(acs, index):
    if not acs:
        raise NumericalFault("no avoided crossing found in the scanned field range")
    if not 0 <= index < len(acs):
        raise UsageError(f"--ac-index {index} out of range (found {len(acs)} crossings)")
    return acs[index]


def cmd_multilevel(args) -> None:
    actions = [args.static_spectrum, args.find_acs, args.drive, args.floquet_sweep]
    if sum(actions) != 1:
        raise UsageError("choose exactly one of --static-spectrum, --find-acs, --drive, --floquet-sweep")
    if args.system:
        try:
            system = ml.load_system(args.system)
        except (NonHermitianError, DimensionMismatchError) as exc:
            raise SchemaError(f"{args.system}: {exc}") from exc
    else:
        system = ml.synthetic_ac(_parse_synthetic(args.synthetic))
    spp = _steps(args)
    run = Run("multilevel", args)
    if args.save_system:
        ml.save_system(system, run.path("system.json"))
    table, acs = _system_acs(system, args)
    run.grids["eps"] = [args.eps_min, args.eps_max, args.eps_points]

    if args.static_spectrum:
        header = ["eps"] + [f"level_{k}" for k in range(system.dim)]
        write_csv(run.path("static_spectrum.csv"), header, [table.eps, *table.energies.T])
    elif args.find_acs:
        write_json(run.path("acs.json"), {"acs": [ac.to_dict() for ac in acs]})
        run.results["count"] = len(acs)
    elif args.drive:
        ac = _select_ac(acs, args.ac_index)
        eff = ml.effective_tls(ac)
        omega = args.omega_mult[0] * eff.delta
        if (args.amp is None) == (args.peak is None):
            raise UsageError("give exactly one of --amp or --peak with --drive")
        amp_ratio = args.amp if args.amp is not None else float(am.special_amplitudes("peak", args.peak)[-1])
        field_amp = eff.field_amplitude(amp_ratio * omega)
        res = ml.driven_dynamics(system, ac, field_amp, omega, "ac+", args.horizon, args.basis, spp, args.sample_stride)
        analytic = am.analytic_pnd(res.params, res.times)
        header = ["t"] + [f"pop_{name}" for name in res.labels] + ["leakage", "tls_analytic_pnd"]
        write_csv(run.path("populations.csv"), header, [res.times, *res.populations.T, res.leakage, analytic])
        mask = res.times <= am.flip_time(res.params)
        run.results = {
            "amp_ratio": amp_ratio,
            "field_amplitude": field_amp,
            "omega": omega,
            "ac": ac.to_dict(),
            "tls_sup_norm": float(np.abs(res.populations[mask, 0] - analytic[mask]).max()),
            "max_leakage": float(res.leakage.max()),
        }
        run.grids.update(steps_per_period=spp, sample_stride=args.sample_stride)
    else:
        ac = _select_ac(acs, args.ac_index)
        grid = _amp_grid(args)
        summary = []
        for mult in args.omega_mult:
            sweep = ml.floquet_sweep_multilevel(system, ac, mult * ac.gap, grid, spp)
            name = f"floquet_omega_{_num(mult)}.csv"
            write_csv(
                run.path(name),
                ["amp_ratio", "eps_plus", "eps_minus", "gap", "tls_gap", "ac_weight", "flagged"],
                [grid, [p.eps_plus for p in sweep.points], [p.eps_minus for p in sweep.points], sweep.gap,
                 sweep.tls_gap, sweep.weights, sweep.flagged],
            )
            summary.append({"omega_mult": mult, "omega": sweep.omega, "file": name, "distortion": sweep.distortion,
                            "flagged": int(sweep.flagged.sum()), "flagged_fraction": sweep.flagged_fraction})
        write_json(run.path("distortion.json"), {"ac": ac.to_dict(), "sweeps": summary})
        run.grids.update(amp_ratio=[args.amp_min, args.amp_max, args.points], steps_per_period=spp)
        run.results = {"distortion": [s["distortion"] for s in summary]}
    run.finish()


# -- parser ------------------------------------------------------------------


def _add_amp_range(p, amp_max=7.0, points=1400):
    p.add_argument("--amp-min", type=float, default=0.0, help="smallest A/omega")
    p.add_argument("--amp-max", type=float, default=amp_max, help="largest A/omega")
    p.add_argument("--points", type=int, default=points, help="number of A/omega grid points (>= 3)")


def _add_common(p, steps):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps-per-period", type=int, default=steps, help="propagation steps per drive period")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floquet-transfer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="quasienergy spectrum versus A/omega")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    _add_amp_range(p)
    _add_common(p, DEFAULT_STEPS_TLS)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("dynamics", help="non-decay probability trajectory and step ladder")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--amp", type=float, help="drive amplitude A/omega")
    p.add_argument("--peak", type=int, help="use the measured n-th gap maximum")
    p.add_argument("--horizon", type=float, help="end time (default 1.2 T_F)")
    p.add_argument("--analytic", action="store_true", help="add the closed-form P_ND column")
    p.add_argument("--bloch", action="store_true", help="add Bloch vector columns")
    p.add_argument("--rwa-reference", action="store_true", help="add averaged-gap and cos(omega t) columns")
    p.add_argument("--sample-stride", type=int, default=8, help="write every n-th step")
    _add_common(p, DEFAULT_STEPS_TLS)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("scan-pnd", help="P_ND at the flip time versus A/omega")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    _add_amp_range(p, points=301)
    p.add_argument("--gap-floor", type=float, help="skip points with smaller gap (default 1e-3 omega)")
    _add_common(p, DEFAULT_STEPS_TLS)
    p.set_defaults(func=cmd_scan_pnd)

    p = sub.add_parser("multilevel", help="N-level avoided-crossing pipeline")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--system", help="system description JSON file")
    src.add_argument("--synthetic", help="'default' or key=value pairs, e.g. dim=6,gap=0.1,slopes=1:-1")
    p.add_argument("--static-spectrum", action="store_true")
    p.add_argument("--find-acs", action="store_true")
    p.add_argument("--drive", action="store_true")
    p.add_argument("--floquet-sweep", action="store_true")
    p.add_argument("--save-system", action="store_true", help="also write the system as system.json")
    p.add_argument("--eps-min", type=float, default=-1.5)
    p.add_argument("--eps-max", type=float, default=1.5)
    p.add_argument("--eps-points", type=int, default=601)
    p.add_argument("--max-gap", type=float, help="largest gap reported as a crossing")
    p.add_argument("--ac-index", type=int, default=0)
    p.add_argument("--peak", type=int, help="drive at the n-th halved J1 zero")
    p.add_argument("--amp", type=float, help="drive amplitude A/omega of the effective two-level model")
    p.add_argument("--omega-mult", type=_float_list, default=[1.0], help="omega in units of the AC gap; comma list for sweeps")
    p.add_argument("--horizon", type=float)
    p.add_argument("--basis", choices=("diabatic", "center"), default="diabatic")
    p.add_argument("--sample-stride", type=int, default=8)
    _add_amp_range(p, points=141)
    _add_common(p, DEFAULT_STEPS_MULTILEVEL)
    p.set_defaults(func=cmd_multilevel)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (NumericalFault, FeatureError) as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
