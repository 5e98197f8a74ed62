"""File-based pipeline: synth -> identify -> ftest / powerlaw -> design -> analyze -> report.

Each verb reads the outputs of its upstream verbs from ``--out`` and writes
its own subdirectory there. Exit codes: 0 ok, 2 configuration, 3 numeric
failure, 4 infeasible design.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigurationError, StiffnessError
from .fractional import AmplifierDesign, LagCascade, design_amplifier
from .loop import bode, margins, marginal_f_search, predicted_amplification, stability_sweep
from .model import JointParams, ModelKind, SeaModel, loss_factor_and_ratio
from .protocol import DEFAULT_SUBJECT, GroundTruthSubject, TimeSeries, build_protocol, make_cohort, synthesize_experiment
from .scaling import PowerLaw, fit_power_law, geometric_average
from .stats import RssTable, f_test_suite
from .sysid import FitResult, FrequencySample, extract_samples, fit_all, phase_shift_stats

log = logging.getLogger("complex_stiffness")

OUTPUT_FORMAT = "complex-stiffness/output-v1"


# --- file helpers ------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"format": OUTPUT_FORMAT, **payload}
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Path, verb: str) -> dict:
    if not path.exists():
        raise ConfigurationError(f"missing {path}; run `complex-stiffness {verb}` first")
    return json.loads(path.read_text())


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (f"{v:.10g}" if isinstance(v, float) else v) for v in row])
    return path


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root: Path, verb: str, files: Sequence[Path]) -> Path:
    entries = [
        {"path": str(p.relative_to(root)), "sha256": sha256(p), "bytes": p.stat().st_size}
        for p in sorted(files)
    ]
    return write_json(root / verb / "manifest.json", {"verb": verb, "files": entries})


def _sea(cfg) -> SeaModel:
    return SeaModel(omega_sea=cfg.omega_sea, zeta_sea=cfg.zeta_sea)


# --- verbs -------------------------------------------------------------------


def build_subjects(cfg: RunConfig) -> list[GroundTruthSubject]:
    sc = cfg.synth.subject
    base = GroundTruthSubject(
        K_groups=tuple(sc.K_groups),
        powerlaw=PowerLaw(sc.beta0, sc.beta1),
        B_h=sc.B_h,
        M_h=sc.M_h,
        noise_std_torque=sc.noise_std_torque,
        noise_std_angle=sc.noise_std_angle,
        rng_seed=cfg.seed,
        subject_id="S00",
    )
    if cfg.synth.subjects == 1:
        return [base]
    return make_cohort(cfg.synth.subjects, cfg.seed, base, cfg.synth.stiffness_spread, cfg.synth.loss_spread)


def cmd_synth(cfg: RunConfig, out: Path, fmt: str) -> None:
    subjects = build_subjects(cfg)
    sea = _sea(cfg.synth.sea)
    protocol = build_protocol(cfg.synth.boost)
    files = []
    for subject in subjects:
        for spec in protocol:
            ts = synthesize_experiment(spec, subject, sea, cfg.synth.dt, cfg.synth.M_e)
            stem = out / "synth" / subject.subject_id / f"exp_{spec.exp_id}"
            stem.parent.mkdir(parents=True, exist_ok=True)
            files += ts.write(stem.with_suffix(".csv"), stem.with_suffix(".json"), cfg.synth.precision)
            log.info("synth %s exp %d", subject.subject_id, spec.exp_id)
    files.append(
        write_json(
            out / "synth" / "subjects.json",
            {"seed": cfg.seed, "M_e": cfg.synth.M_e, "sea": sea.to_dict(), "subjects": [s.to_dict() for s in subjects]},
        )
    )
    write_manifest(out, "synth", files)


def _synth_runs(out: Path) -> list[tuple[str, int, Path]]:
    root = out / "synth"
    if not (root / "manifest.json").exists():
        raise ConfigurationError(f"no synthesized data under {root}; run `complex-stiffness synth` first")
    runs = []
    for csv_path in sorted(root.glob("*/exp_*.csv")):
        runs.append((csv_path.parent.name, int(csv_path.stem.split("_")[1]), csv_path))
    return runs


def cmd_identify(cfg: RunConfig, out: Path, fmt: str) -> None:
    files = []
    summary = []
    for subject, exp_id, csv_path in _synth_runs(out):
        ts = TimeSeries.read(csv_path)
        samples = extract_samples(ts, min_angle=cfg.identify.min_angle)
        fits = fit_all(samples)
        exp = ts.metadata.get("experiment", {})
        payload = {
            "subject": subject,
            "exp_id": exp_id,
            "experiment": exp,
            "samples": [s.to_dict() for s in samples],
            "fits": {k.value: f.to_dict() for k, f in fits.items()},
        }
        files.append(write_json(out / "identify" / subject / f"exp_{exp_id}.json", payload))
        for k, f in fits.items():
            summary.append(
                {"subject": subject, "exp_id": exp_id, "alpha": exp.get("alpha"), "model": k.value,
                 **f.params.to_dict(), "rss": f.rss, "r2": f.r2, "condition_number": f.condition_number,
                 "flags": f.flags}
            )
        log.info("identify %s exp %d", subject, exp_id)
    files.append(write_json(out / "identify" / "summary.json", {"fits": summary, "n": 10}))
    if fmt == "csv":
        header = ["subject", "exp_id", "model", "K_h_Nm_per_rad", "H_h_Nm_per_rad", "B_h_Nms_per_rad",
                  "M_h_kgm2", "rss_Nm2_per_rad2", "r2", "condition_number"]
        rows = [[r["subject"], r["exp_id"], r["model"], r["K_h"], r["H_h"], r["B_h"], r["M_h"], r["rss"], r["r2"],
                 r["condition_number"]] for r in summary]
        files.append(write_csv(out / "identify" / "summary.csv", header, rows))
    write_manifest(out, "identify", files)


def _load_fits(out: Path) -> list[dict]:
    return read_json(out / "identify" / "summary.json", "identify")["fits"]


def _rss_table(fits: list[dict]) -> RssTable:
    table = RssTable(n=10)
    for r in fits:
        table.add(r["subject"], r["exp_id"], ModelKind(r["model"]), r["rss"])
    return table


def cmd_ftest(cfg: RunConfig, out: Path, fmt: str) -> None:
    table = _rss_table(_load_fits(out))
    reports = [r.to_dict() for r in f_test_suite(table, cfg.ftest.p)]
    files = [write_json(out / "ftest" / "ftest.json", {"rss_table": table.to_dict(), "tests": reports})]
    if fmt == "csv":
        files.append(_ftest_csv(out / "ftest" / "ftest.csv", reports))
    write_manifest(out, "ftest", files)


def _ftest_csv(path: Path, reports: list[dict]) -> Path:
    header = ["scope", "key", "comparison", "F_dimensionless", "d1", "d2", "F_crit_dimensionless", "significant"]
    rows = [[r["scope"], r["key"], r["comparison"], r["F"], r["df"][0], r["df"][1], r["F_crit"], r["significant"]]
            for r in reports]
    return write_csv(path, header, rows)


def _m2_points(fits: list[dict]) -> dict[str, dict[int, tuple[float, float]]]:
    points: dict[str, dict[int, tuple[float, float]]] = {}
    for r in fits:
        if r["model"] == "M2":
            points.setdefault(r["subject"], {})[r["exp_id"]] = (r["K_h"], r["H_h"])
    return points


def cmd_powerlaw(cfg: RunConfig, out: Path, fmt: str) -> None:
    points = _m2_points(_load_fits(out))
    per_subject = {}
    for subject, by_exp in sorted(points.items()):
        good = [(k, h) for k, h in by_exp.values() if k > 0 and h > 0]
        if len(good) >= 2:
            per_subject[subject] = fit_power_law(good, {"subject": subject, "model": "M2", "points": len(good)}).to_dict()
    experiments = sorted({e for by_exp in points.values() for e in by_exp})
    averages = []
    for e in experiments:
        ks = [by_exp[e][0] for by_exp in points.values() if e in by_exp and by_exp[e][0] > 0 and by_exp[e][1] > 0]
        hs = [by_exp[e][1] for by_exp in points.values() if e in by_exp and by_exp[e][0] > 0 and by_exp[e][1] > 0]
        if ks:
            averages.append({"exp_id": e, "K_h": geometric_average(ks), "H_h": geometric_average(hs), "n_subjects": len(ks)})
    cohort = fit_power_law(
        [(a["K_h"], a["H_h"]) for a in averages],
        {"source": "geometric averages across subjects", "model": "M2", "subjects": sorted(points)},
    )
    all_k = [k for by_exp in points.values() for k, _ in by_exp.values() if k > 0]
    files = [
        write_json(
            out / "powerlaw" / "powerlaw.json",
            {"cohort": cohort.to_dict(), "subjects": per_subject, "averages": averages,
             "stiffness_range": [min(all_k), max(all_k)]},
        )
    ]
    write_manifest(out, "powerlaw", files)


def _design_inputs(cfg: RunConfig, out: Path) -> tuple[PowerLaw | None, float, float]:
    d = cfg.design
    pl_path = out / "powerlaw" / "powerlaw.json"
    fitted = json.loads(pl_path.read_text()) if pl_path.exists() else None
    if d.beta0 is not None and d.beta1 is not None:
        powerlaw = PowerLaw(d.beta0, d.beta1)
    elif fitted is not None:
        powerlaw = PowerLaw.from_dict(fitted["cohort"])
    elif d.f is not None:
        powerlaw = None
    else:
        raise ConfigurationError(
            "design needs a power law: set design.beta0/beta1 or run `complex-stiffness powerlaw` first"
        )
    K_low, K_high = d.K_low, d.K_high
    if K_low is None or K_high is None:
        if fitted is None:
            raise ConfigurationError(
                "design needs a stiffness range: set design.K_low/K_high or run `complex-stiffness powerlaw` first"
            )
        lo, hi = fitted["stiffness_range"]
        K_low = lo if K_low is None else K_low
        K_high = hi if K_high is None else K_high
    return powerlaw, K_low, K_high


def cmd_design(cfg: RunConfig, out: Path, fmt: str) -> None:
    d = cfg.design
    powerlaw, K_low, K_high = _design_inputs(cfg, out)
    design = design_amplifier(powerlaw, K_low, K_high, d.phi_deg, d.M_h, d.M_e, d.f, d.K_nominal)
    cascade = design.cascade(d.n_lags, d.p_1, d.r_pp, d.normalize)
    gain_error = abs(cascade.response(design.omega_gc_hat)) - 1.0
    audit = dict(design.audit)
    audit.update(
        cascade_gain_error_at_nominal=gain_error,
        cascade_approximate_order=cascade.approximate_order,
        cascade_band_rad_s=list(cascade.band),
        normalize=d.normalize,
    )
    payload = {"design": design.to_dict(), "cascade": cascade.to_dict(), "audit": audit}
    files = [write_json(out / "design" / "design.json", payload)]
    write_manifest(out, "design", files)
    print(f"k_p           = {design.k_p:.4f} (~{design.k_p:.1f})")
    print(f"K range       = [{design.K_low:.2f}, {design.K_high:.2f}] Nm/rad, K_hat = {design.K_hat:.2f} Nm/rad")
    print(f"omega_gc_hat  = {design.omega_gc_hat:.3f} rad/s")
    print(f"f             = {design.f:.4f}, k_f = {design.k_f:.4f}, phi = {design.phi_deg:.2f} deg")
    print(f"cascade       = {cascade.n} lags, p_1 = {cascade.poles[0]:g}, r_pp = {cascade.r_pp:.4f}, "
          f"r_zp = {cascade.r_zp:.4f}")
    for key, value in audit.items():
        print(f"audit.{key:<28} = {value}")


def _load_design(out: Path) -> tuple[AmplifierDesign, LagCascade, dict]:
    payload = read_json(out / "design" / "design.json", "design")
    return AmplifierDesign.from_dict(payload["design"]), LagCascade.from_dict(payload["cascade"]), payload


def cmd_analyze(cfg: RunConfig, out: Path, fmt: str) -> None:
    design, cascade, _ = _load_design(out)
    a = cfg.analyze
    sea = _sea(a.sea)
    pl = design.powerlaw
    result: dict = {"sea": sea.to_dict(), "band_rad_s": [1e-2, 1e3]}
    points = {"K_low": design.K_low, "K_hat": design.K_hat, "K_high": design.K_high}
    files = []
    if pl is not None:
        per_point = {}
        for name, K in points.items():
            params = JointParams(K_h=K, H_h=float(pl.loss_factor(K)) * K, M_h=design.M_h)
            per_point[name] = {
                "K_h": K,
                "loss": dict(zip(("c_h", "zeta", "phase_deg"), loss_factor_and_ratio(K, pl))),
                "ideal": margins(design, params, sea).to_dict(),
                "cascade": margins(design, params, sea, cascade).to_dict(),
            }
        result["margins"] = per_point
        result["sweep_cascade"] = stability_sweep(design, pl, sea, cascade, n_points=a.sweep_points).to_dict()
        result["sweep_ideal"] = stability_sweep(design, pl, sea, None, n_points=a.sweep_points).to_dict()
        if a.marginal_search:
            try:
                result["marginal_f_cascade"] = marginal_f_search(design, sea, powerlaw=pl)
            except StiffnessError as exc:
                result["marginal_f_cascade"] = None
                result["marginal_f_error"] = str(exc)
        K = design.K_hat
        trace = bode(design, cascade.response, JointParams(K_h=K, H_h=float(pl.loss_factor(K)) * K, M_h=design.M_h),
                     sea, points_per_decade=a.bode_points_per_decade)
        header, table = trace.rows()
        files.append(write_csv(out / "analyze" / "bode_K_hat.csv", header, table.tolist()))
    result["amplification"] = {
        "ideal": predicted_amplification(design, None, a.probe_omegas).to_dict(),
        "cascade": predicted_amplification(design, cascade, a.probe_omegas).to_dict(),
    }
    files.append(write_json(out / "analyze" / "analysis.json", result))
    write_manifest(out, "analyze", files)


def cmd_report(cfg: RunConfig, out: Path, fmt: str) -> None:
    fits = _load_fits(out)
    ftests = read_json(out / "ftest" / "ftest.json", "ftest")
    powerlaw = read_json(out / "powerlaw" / "powerlaw.json", "powerlaw")
    design_payload = read_json(out / "design" / "design.json", "design")
    analysis = read_json(out / "analyze" / "analysis.json", "analyze")

    phase_rows = []
    for subject in sorted({r["subject"] for r in fits}):
        for g in range(3):
            exps = []
            for exp_id in (3 * g + 1, 3 * g + 2, 3 * g + 3):
                path = out / "identify" / subject / f"exp_{exp_id}.json"
                if path.exists():
                    exps.append([FrequencySample.from_dict(s) for s in json.loads(path.read_text())["samples"]])
            if exps:
                mean, se = phase_shift_stats(exps)
                phase_rows.append({"subject": subject, "experiments": f"{3*g+1}-{3*g+3}", "mean_deg": mean, "stderr_deg": se})
    param_rows = [
        {"subject": r["subject"], "exp_id": r["exp_id"], "K_h_Nm_per_rad": r["K_h"], "H_h_Nm_per_rad": r["H_h"],
         "M_h_kgm2": r["M_h"], "r2": r["r2"]}
        for r in fits if r["model"] == "M2"
    ]
    amp = analysis["amplification"]
    amp_rows = []
    for realization in ("ideal", "cascade"):
        rep = amp[realization]
        for w, ratio, ph in zip(rep["omega_rad_s"], rep["ratio"], rep["phase_deg"]):
            amp_rows.append({"realization": realization, "omega_rad_s": w, "ratio": ratio, "phase_deg": ph})
    report = {
        "phase_shift": phase_rows,
        "parameters_M2": param_rows,
        "r2_convention": "1 - RSS/TSS, TSS about the mean of stacked real and imaginary parts",
        "ftests": ftests["tests"],
        "powerlaw": powerlaw["cohort"],
        "design": design_payload["design"],
        "design_audit": design_payload["audit"],
        "sea": analysis["sea"],
        "amplification": amp_rows,
    }
    files = [write_json(out / "report" / "report.json", report)]
    rdir = out / "report"
    files.append(write_csv(rdir / "phase_shift.csv", ["subject", "experiments", "mean_deg", "stderr_deg"],
                           [[r["subject"], r["experiments"], r["mean_deg"], r["stderr_deg"]] for r in phase_rows]))
    files.append(write_csv(rdir / "parameters_M2.csv", list(param_rows[0]) if param_rows else [],
                           [list(r.values()) for r in param_rows]))
    files.append(_ftest_csv(rdir / "ftest.csv", ftests["tests"]))
    pl = powerlaw["cohort"]
    files.append(write_csv(rdir / "powerlaw.csv", ["beta0_log10_Nm_per_rad", "beta1_dimensionless", "r2"],
                           [[pl["beta0"], pl["beta1"], pl["r2"]]]))
    files.append(write_csv(rdir / "amplification.csv", ["realization", "omega_rad_s", "ratio", "phase_deg"],
                           [list(r.values()) for r in amp_rows]))
    write_manifest(out, "report", files)


VERBS = {
    "synth": cmd_synth,
    "identify": cmd_identify,
    "ftest": cmd_ftest,
    "powerlaw": cmd_powerlaw,
    "design": cmd_design,
    "analyze": cmd_analyze,
    "report": cmd_report,
}
PIPELINE = ("synth", "identify", "ftest", "powerlaw", "design", "analyze", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="complex-stiffness", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in (*VERBS, "pipeline"):
        p = sub.add_parser(verb)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default="json", help="also emit CSV tables with csv")
        p.add_argument("-v", "--verbose", action="store_true")
        if verb in ("synth", "pipeline"):
            p.add_argument("--subjects", type=int, help="override synth.subjects")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        updates = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigurationError("--seed must be an unsigned 64-bit integer")
            updates["seed"] = args.seed
        if getattr(args, "subjects", None) is not None:
            if args.subjects < 1:
                raise ConfigurationError("--subjects must be >= 1")
            updates["synth"] = cfg.synth.model_copy(update={"subjects": args.subjects})
        cfg = cfg.model_copy(update=updates)
        verbs = PIPELINE if args.verb == "pipeline" else (args.verb,)
        for verb in verbs:
            VERBS[verb](cfg, args.out, args.format)
    except StiffnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
