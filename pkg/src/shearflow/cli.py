"""Command-line entry point: ``shearflow <subcommand> [options]``.

Exit codes: 0 success, 2 bad configuration, 3 numerical guard violation,
4 analysis failure.  Errors are written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import config as cfgmod
from .analysis import (first_order_flux_check, moment_boundedness_scan, moment_threshold,
                       tail_index, weighted_profile_distance)
from .diagnostics import Histogram2D, read_series, write_csv, write_json
from .dsmc import HomogeneousConfig, measure_beta_from_energy, run_homogeneous
from .errors import AnalysisError, ConfigError, ShearFlowError
from .kernel import make_kernel, predicted_beta_leading
from .moments import MomentState, growth_rate_exact, integrate_moments, trajectory_array
from .spatial import InhomogeneousConfig, fit_mode_decay, run_inhomogeneous

log = logging.getLogger("shearflow")


def build_kernel(cfg):
    return make_kernel(cfg["kernel.id"], cfg["kernel.amplitude"], cfg["kernel.table_path"] or None)


def _solver_kwargs(cfg):
    return dict(
        N=cfg["run.N"], alpha=cfg["run.alpha"], dt=cfg["run.dt"], t_end=cfg["run.t_end"],
        seed=cfg["run.seed"], kernel=build_kernel(cfg), frame=cfg["frame.kind"],
        beta_policy=cfg["frame.beta_policy"], beta=cfg["frame.beta"],
        splitting=cfg["run.splitting"], count_policy=cfg["collision.count_policy"],
        cadence=cfg["output.cadence"], threads=cfg["run.threads"],
        partitions=cfg["run.partitions"], normalize_energy=cfg["run.normalize_energy"],
        shear_perturbation=cfg["run.shear_perturbation"],
        moment_orders=tuple(cfg["output.moment_orders"]),
        hist_from=cfg["output.hist_from"] if cfg["output.histograms"] else None,
        hist_bins=cfg["output.hist_bins"], hist_half_width=cfg["output.hist_half_width"],
    )


def homogeneous_config(cfg) -> HomogeneousConfig:
    return HomogeneousConfig(**_solver_kwargs(cfg))


def inhomogeneous_config(cfg) -> InhomogeneousConfig:
    return InhomogeneousConfig(**_solver_kwargs(cfg), n_cells=cfg["spatial.n_cells"],
                               L=cfg["spatial.L"], mode_k=cfg["spatial.perturb.mode_k"],
                               amplitude=cfg["spatial.perturb.amplitude"],
                               k_max=cfg["spatial.k_max"])


def _prepare_outdir(cfg) -> Path:
    out = cfgmod.output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_json(cfgmod.resolved_document(cfg), out / "config.json")
    return out


def cmd_predict(cfg, args):
    b0 = args.b0 if args.b0 is not None else build_kernel(cfg).b0
    alpha = cfg["run.alpha"]
    sol = growth_rate_exact(alpha, b0)
    doc = {"alpha": alpha, "b0": b0, "s": sol.s, "beta": sol.beta,
           "beta_leading": predicted_beta_leading(alpha, b0),
           "M_steady": sol.M_steady.tolist()}
    print(json.dumps(doc, indent=2, sort_keys=True))
    if cfg["output.dir"]:
        out = _prepare_outdir(cfg)
        write_json(doc, out / "prediction.json")
    return 0


def cmd_moments(cfg, args):
    kernel = build_kernel(cfg)
    alpha, dt = cfg["run.alpha"], cfg["run.dt"]
    beta = 0.0
    if cfg["frame.kind"] == "self_similar":
        beta = cfg["frame.beta"] if cfg["frame.beta"] is not None else \
            growth_rate_exact(alpha, kernel.b0).beta
    traj = integrate_moments(MomentState.isotropic(), alpha, kernel.b0, cfg["run.t_end"], dt, beta)
    stride = max(1, int(round(cfg["output.cadence"] / dt)))
    arr = trajectory_array(traj)
    keep = np.zeros(len(arr), dtype=bool)
    keep[::stride] = True
    keep[-1] = True
    frame = pd.DataFrame(arr[keep], columns=["t", "M11", "M12", "M22", "M33", "trace"])
    out = _prepare_outdir(cfg)
    write_csv(frame, out / "series.csv")
    write_json({"alpha": alpha, "b0": kernel.b0, "nu0": kernel.nu0, "beta": beta,
                "rows": int(len(frame))}, out / "summary.json")
    return 0


def _write_run(cfg, result, out: Path, kernel):
    write_csv(result.series, out / "series.csv")
    if result.hist_xy is not None:
        result.hist_xy.write(out / "hist_xy.csv")
        result.hist_speed.write(out / "hist_speed.csv")
    for name, table in result.extra_tables.items():
        write_csv(table, out / f"{name}.csv")
    if cfg["output.save_final"]:
        np.save(out / "final_velocities.npy", result.ensemble.velocities)
    final = result.records[-1]
    summary = {"b0": kernel.b0, "nu0": kernel.nu0, "alpha": cfg["run.alpha"],
               "final_t": final.t, "final_M": final.M, "final_trace": final.trace,
               "final_beta_current": final.beta_current, "collisions": final.collisions,
               "wall_time": result.wall_time}
    if cfg["run.alpha"] > 0:
        summary["beta_exact"] = growth_rate_exact(cfg["run.alpha"], kernel.b0).beta
    try:
        est = measure_beta_from_energy(result.series, cfg["analysis.transient"],
                                       cfg["analysis.beta_min_span"])
        summary.update(est.to_dict())
    except AnalysisError as exc:
        summary["beta_hat_error"] = exc.to_payload()
    write_json(summary, out / "summary.json")


def cmd_homogeneous(cfg, args):
    run_cfg = homogeneous_config(cfg)
    run_cfg.validate()
    out = _prepare_outdir(cfg)
    result = run_homogeneous(run_cfg)
    _write_run(cfg, result, out, run_cfg.kernel)
    return 0


def cmd_inhomogeneous(cfg, args):
    run_cfg = inhomogeneous_config(cfg)
    run_cfg.validate()
    out = _prepare_outdir(cfg)
    result = run_inhomogeneous(run_cfg)
    _write_run(cfg, result, out, run_cfg.kernel)
    return 0


def cmd_analyze(cfg, args):
    src = Path(args.input or cfg["analysis.input"] or "")
    if not src.is_dir():
        raise AnalysisError("analysis input directory not found", path=str(src))
    series = read_series(src / "series.csv")
    run_doc = {}
    if (src / "config.json").exists():
        run_doc = json.loads((src / "config.json").read_text())
    run_cfg = cfgmod.resolve(run_doc.get("run.mode", "homogeneous"),
                             {k: v for k, v in run_doc.items()
                              if k in cfgmod.KEYS and k != "run.mode"})
    alpha = run_cfg["run.alpha"]
    kernel = build_kernel(run_cfg)
    transient = cfg["analysis.transient"]
    report = {"input": str(src), "alpha": alpha, "b0": kernel.b0, "nu0": kernel.nu0,
              "frame": run_cfg["frame.kind"], "checks": {}}
    checks = report["checks"]
    if alpha > 0:
        report["beta_exact"] = growth_rate_exact(alpha, kernel.b0).beta
        report["beta_leading"] = predicted_beta_leading(alpha, kernel.b0)
    if "trace" in series:
        try:
            est = measure_beta_from_energy(series, transient, cfg["analysis.beta_min_span"])
            report["energy_growth"] = est.to_dict()
            if alpha > 0:
                rel = est.beta / report["beta_exact"] - 1.0
                report["energy_growth"]["rel_error"] = rel
                checks["beta_from_energy"] = abs(rel) <= cfg["analysis.beta_rel_tol"]
        except AnalysisError as exc:
            report["energy_growth"] = exc.to_payload()
            checks["beta_from_energy"] = False
        flux = first_order_flux_check(series, alpha, kernel.b0, transient)
        report["flux_check"] = flux
        checks["flux_within_sigma"] = abs(flux["gap_exact"]) <= cfg["analysis.flux_sigma"] * flux["sigma"]
        if alpha > 0:
            checks["flux_negative"] = bool(flux["strictly_negative"])
    if (src / "hist_xy.csv").exists():
        hist = Histogram2D.read(src / "hist_xy.csv")
        report["profile_distance"] = weighted_profile_distance(
            hist, alpha, kernel.b0, cfg["analysis.hist_l"]).to_dict()
    if (src / "final_velocities.npy").exists():
        v = np.load(src / "final_velocities.npy")
        report["tail_index"] = tail_index(np.linalg.norm(v, axis=1),
                                          cfg["analysis.tail_k_fraction"]).to_dict()
    if any(c.startswith("mom_p") for c in series.columns):
        scan = moment_boundedness_scan(series)
        report["moment_scan"] = scan.to_dict(orient="records")
        report["moment_threshold"] = moment_threshold(scan)
    if (src / "modes.csv").exists():
        modes = pd.read_csv(src / "modes.csv")
        n = int(run_cfg["run.N"])
        rate, err = fit_mode_decay(modes, 1, noise_floor=3.0 / np.sqrt(n))
        report["mode_decay"] = {"k": 1, "rate": rate, "stderr": err}
        checks["mode_decays"] = rate > 0
    report["passed"] = all(checks.values()) if checks else None
    out = Path(args.output) if args.output else src / "report.json"
    write_json(report, out)
    return 0


COMMANDS = {
    "predict": cmd_predict,
    "moments": cmd_moments,
    "homogeneous": cmd_homogeneous,
    "self-similar": cmd_homogeneous,
    "inhomogeneous": cmd_inhomogeneous,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    keys = cfgmod.describe_keys()
    parser = argparse.ArgumentParser(
        prog="shearflow", description="Uniform shear flow of Maxwell molecules: closure "
        "predictions, DSMC runs and analysis.", epilog=keys,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog=keys, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--alpha", type=float, help="shortcut for run.alpha")
        p.add_argument("--seed", type=int, help="shortcut for run.seed")
        p.add_argument("--out", help="shortcut for output.dir")
        if name == "predict":
            p.add_argument("--b0", type=float, help="use this b0 instead of the kernel's")
        if name == "analyze":
            p.add_argument("--input", help="run directory holding series.csv")
            p.add_argument("--output", help="report path (default <input>/report.json)")
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = cfgmod.read_config_file(args.config) if args.config else {}
        overrides = cfgmod.parse_overrides(args.set)
        for flag, key in (("alpha", "run.alpha"), ("seed", "run.seed"), ("out", "output.dir")):
            if getattr(args, flag) is not None:
                overrides[key] = getattr(args, flag)
        cfg = cfgmod.resolve(args.command, file_values, overrides)
        return COMMANDS[args.command](cfg, args)
    except ShearFlowError as exc:
        sys.stderr.write(json.dumps(exc.to_payload(), default=str) + "\n")
        return exc.exit_code
    except OSError as exc:
        err = ConfigError(str(exc), path=getattr(exc, "filename", None))
        sys.stderr.write(json.dumps(err.to_payload(), default=str) + "\n")
        return err.exit_code


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
