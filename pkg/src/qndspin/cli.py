"""Command-line runner: calibrations, scans, and the squeezing pipeline.

Every run writes RFC-4180 CSV tables plus a manifest (the fully resolved
configuration with a [manifest] header) from which `qndspin replay` can
reproduce it byte for byte.  Exit codes: 0 ok, 1 config error, 2 usage,
3 physics/pipeline error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels, analysis, experiments, geometry
from .config import RunConfig, load_config
from .errors import ConfigError, QndSpinError
from .experiments import DOMAIN_COUPLING, ExperimentSetup, trial_rng
from .sequences import parse_sequence_steps
from .svgplot import SvgPlot

EXIT_CONFIG, EXIT_USAGE, EXIT_PHYSICS = 1, 2, 3


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (overrides shipped defaults)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials (overrides config)")
    parser.add_argument("--workers", type=int, help="worker threads (overrides config)")
    parser.add_argument("--out", default=".", help="output directory (default: cwd)")
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qndspin",
        description="Conditional spin-squeezing measurement-chain simulator",
    )
    parser.add_argument("--version", action="version", version=f"qndspin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate-geometry", help="cavity geometry from mode spacings")
    _common(p)

    p = sub.add_parser("calibrate-coupling", help="effective atom number and coupling")
    _common(p)
    p.add_argument("--samples", type=int, default=1_000_000, help="atom positions to sample")

    p = sub.add_parser("projection-scan", help="Var(J_z) versus atom number")
    _common(p)
    p.add_argument("--n", default="1e4,1e5,7e5", help="comma list of effective atom numbers")
    p.add_argument(
        "--sequence",
        default="table2_b",
        choices=["table2_a", "table2_b", "config"],
        help="projection-noise sequence; 'config' reads the [sequence] steps "
        "from the config file",
    )
    p.add_argument(
        "--full-readout",
        action="store_true",
        help="use the full sweep+fit readout instead of the ideal one",
    )

    p = sub.add_parser("squeeze", help="two-QND-measurement squeezing pipeline")
    _common(p)
    p.add_argument(
        "--empirical-weight",
        action="store_true",
        help="condition with the empirical optimum weight instead of the "
        "budget's Bayesian weight",
    )

    p = sub.add_parser("backaction-scan", help="conditioned variance vs inserted rotation")
    _common(p)
    p.add_argument("--psi-points", type=int, default=9, help="points on [0, pi]")
    p.add_argument("--psi", default=None, help="explicit comma list of angles (rad)")

    p = sub.add_parser("contrast-scan", help="contrast versus probe photon number")
    _common(p)
    p.add_argument("--photons", default=None, help="comma list of photon numbers")
    p.add_argument("--trials-per-phase", type=int, default=40)

    p = sub.add_parser("rotation-noise", help="added-noise tables, analytic and MC")
    _common(p)

    p = sub.add_parser("solve-budget", help="close the noise budget from two dB targets")
    _common(p)
    p.add_argument("--var-diff-db", type=float, default=-2.6)
    p.add_argument("--var-cond-db", type=float, default=-4.9)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _setup(cfg: RunConfig, ideal_readout: bool = False) -> ExperimentSetup:
    noise = cfg.noise if cfg.rotation_noise_enabled else experiments.ZERO_NOISE
    return ExperimentSetup(
        n_eff=cfg.n_eff,
        contrast_i=cfg.contrast_i,
        chain=cfg.chain(ideal_readout=ideal_readout),
        budget=cfg.budget(),
        noise=noise,
        seed=cfg.seed,
        workers=cfg.workers,
    )


def _apply_flag_overrides(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"run.trials={args.trials}")
    if args.workers is not None:
        overrides.append(f"run.workers={args.workers}")
    return load_config(args.config, overrides)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(path: Path, cfg: RunConfig, command: str, argrec: dict) -> None:
    parser = configparser.ConfigParser()
    parser.add_section("manifest")
    parser.set("manifest", "command", command)
    for key, value in argrec.items():
        parser.set("manifest", f"arg_{key}", str(value))
    parser.set("manifest", "version", __version__)
    parser.set("manifest", "backend", _kernels.backend_name())
    parser.set("manifest", "config_sha256", cfg.sha256())
    for section, items in sorted(cfg.resolved.items()):
        parser.add_section(section)
        for key, value in sorted(items.items()):
            parser.set(section, key, value)
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad numeric list {text!r}: {exc}")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_calibrate_geometry(args, cfg: RunConfig, out: Path) -> int:
    z_r, w0, length = geometry.geometry_from_mode_spacings(
        cfg.cavity.fsr, cfg.spacing01, cfg.cavity.lambda_probe, cfg.spacing02
    )
    kappa = cfg.cavity.fsr / cfg.cavity.finesse
    print(f"cavity length   {length * 100:.4f} cm")
    print(f"Rayleigh length {z_r * 100:.4f} cm")
    print(f"mode waist      {w0 * 1e6:.2f} um")
    print(f"kappa           {kappa / 1e6:.3f} MHz (FWHM)")
    _write_csv(
        out / "geometry.csv",
        ["z_r_m", "w0_m", "kappa_hz", "length_m"],
        [[f"{z_r:.9e}", f"{w0:.9e}", f"{kappa:.9e}", f"{length:.9e}"]],
    )
    _write_manifest(out / "geometry_manifest.ini", cfg, "calibrate-geometry", {})
    return 0


def cmd_calibrate_coupling(args, cfg: RunConfig, out: Path) -> int:
    rng = trial_rng(cfg.seed, DOMAIN_COUPLING, 0, 0)
    positions = geometry.sample_atom_positions(cfg.cloud, cfg.cavity, args.samples, rng)
    eff = geometry.effective_params(positions, cfg.cavity, rng=rng)
    two_g_khz = 2.0 * eff.g_eff / 1e3
    err_khz = two_g_khz * eff.mc_error / 2.0
    print(f"samples        {args.samples}")
    print(f"N/N_tot        {eff.n_eff_fraction:.4f} +- {eff.n_eff_fraction * eff.mc_error:.4f}")
    print(f"2g_eff         2pi x {two_g_khz:.1f} +- {err_khz:.1f} kHz")
    _write_csv(
        out / "coupling.csv",
        ["samples", "n_eff_fraction", "fraction_err", "two_g_eff_hz"],
        [[args.samples, f"{eff.n_eff_fraction:.6f}",
          f"{eff.n_eff_fraction * eff.mc_error:.6f}", f"{2 * eff.g_eff:.3f}"]],
    )
    _write_manifest(
        out / "coupling_manifest.ini", cfg, "calibrate-coupling", {"samples": args.samples}
    )
    return 0


def cmd_projection_scan(args, cfg: RunConfig, out: Path) -> int:
    n_values = _floats(args.n)
    setup = _setup(cfg, ideal_readout=not args.full_readout)
    custom = None
    if args.sequence == "config":
        steps = cfg.resolved.get("sequence", {}).get("steps")
        if not steps:
            raise ConfigError("--sequence config needs a [sequence] steps entry")
        custom = parse_sequence_steps(steps)
    result = experiments.run_projection_scan(
        setup, n_values, cfg.trials, sequence_name=args.sequence, sequence=custom
    )
    print(f"fitted linear ratio (to N/4): {result['linear_ratio']:.4f}")
    for row in result["rows"]:
        print(
            f"  N = {row['n_eff']:.3g}: Var(Jz1) = {row['var_jz1']:.4g} "
            f"(N/4 = {row['projection_var']:.4g}), "
            f"rms d(splitting) = {row['splitting_diff_rms'] / 1e3:.1f} kHz"
        )
    _write_csv(
        out / "projection_scan.csv",
        ["n_eff", "var_jz1", "projection_var", "splitting_diff_rms_hz", "linear_ratio"],
        [
            [f"{r['n_eff']:.6e}", f"{r['var_jz1']:.6e}", f"{r['projection_var']:.6e}",
             f"{r['splitting_diff_rms']:.6e}", f"{result['linear_ratio']:.6f}"]
            for r in result["rows"]
        ],
    )
    _write_manifest(
        out / "projection_scan_manifest.ini", cfg, "projection-scan",
        {"n": args.n, "sequence": args.sequence, "full_readout": args.full_readout},
    )
    if args.svg:
        plot = SvgPlot("Projection noise scan", "effective atom number", "Var(Jz1)")
        plot.add_points([r["n_eff"] for r in result["rows"]],
                        [r["var_jz1"] for r in result["rows"]], "measured")
        plot.add_line([r["n_eff"] for r in result["rows"]],
                      [r["projection_var"] for r in result["rows"]], "N/4")
        plot.write(out / "projection_scan.svg")
    return 0


def cmd_squeeze(args, cfg: RunConfig, out: Path) -> int:
    setup = _setup(cfg)
    report, jz = experiments.squeeze_pipeline(
        setup, cfg.trials, empirical_weight=args.empirical_weight
    )
    for line in report.lines():
        print(line)
    _write_csv(
        out / "squeeze_trials.csv",
        ["trial", "jz1", "jz2"],
        [[i, f"{a:.6f}", f"{b:.6f}"] for i, (a, b) in enumerate(jz)],
    )
    _write_csv(
        out / "squeeze_report.csv",
        ["var_diff_db", "var_cond_db", "contrast_i", "contrast_f",
         "zeta_direct_db", "zeta_inferred_db", "mjz_var", "n_trials"],
        [[f"{report.var_diff_db:.4f}", f"{report.var_cond_db:.4f}",
          f"{report.contrast_i:.4f}", f"{report.contrast_f:.4f}",
          f"{report.zeta_direct_db:.4f}", f"{report.zeta_inferred_db:.4f}",
          f"{report.readout_var_calibrated:.4f}", report.n_trials]],
    )
    _write_manifest(out / "squeeze_manifest.ini", cfg, "squeeze", {})
    if args.svg:
        plot = SvgPlot("Correlated QND measurements", "Jz1", "Jz2")
        sel = slice(0, min(len(jz), 2000))
        plot.add_points(jz[sel, 0], jz[sel, 1])
        plot.write(out / "squeeze_scatter.svg")
    return 0


def cmd_backaction_scan(args, cfg: RunConfig, out: Path) -> int:
    psi = _floats(args.psi) if args.psi else list(np.linspace(0.0, math.pi, args.psi_points))
    setup = _setup(cfg)
    rows = experiments.run_backaction_scan(setup, psi, cfg.trials)
    for r in rows:
        print(
            f"psi = {r['psi']:.3f}: {r['variance_db']:+.2f} dB "
            f"(predicted {r['reference_db']:+.2f}, min-unc {r['min_uncertainty_db']:+.2f}), "
            f"product/bound >= {r['uncertainty_product_min']:.2f}"
        )
    _write_csv(
        out / "backaction_scan.csv",
        ["psi_rad", "variance_ratio", "variance_db", "reference_db",
         "min_uncertainty_db", "uncertainty_product_min"],
        [[f"{r['psi']:.6f}", f"{r['variance_ratio']:.6e}", f"{r['variance_db']:.4f}",
          f"{r['reference_db']:.4f}", f"{r['min_uncertainty_db']:.4f}",
          f"{r['uncertainty_product_min']:.4f}"] for r in rows],
    )
    _write_manifest(
        out / "backaction_scan_manifest.ini", cfg, "backaction-scan",
        {"psi": ",".join(f"{p:.6f}" for p in psi)},
    )
    if args.svg:
        plot = SvgPlot("Back-action scan", "psi (rad)", "variance (dB rel. N/4)")
        plot.add_points([r["psi"] for r in rows], [r["variance_db"] for r in rows], "MC")
        plot.add_line([r["psi"] for r in rows], [r["reference_db"] for r in rows], "predicted")
        plot.add_line([r["psi"] for r in rows], [r["min_uncertainty_db"] for r in rows],
                      "minimum uncertainty", color="#7f8c8d")
        plot.write(out / "backaction_scan.svg")
    return 0


def cmd_contrast_scan(args, cfg: RunConfig, out: Path) -> int:
    if args.photons:
        m_values = _floats(args.photons)
    else:
        m_values = list(np.linspace(0.0, 6e5, 13))
    setup = _setup(cfg)
    result = experiments.run_contrast_scan(
        setup, m_values, trials_per_phase=args.trials_per_phase
    )
    fit, sig = result["fit"], result["fit_sigma"]
    print(f"C_i = {fit['contrast_i']:.4f} +- {sig['contrast_i']:.4f}")
    print(f"k1  = {fit['k1']:.3e} +- {sig['k1']:.1e} per photon")
    print(f"k2  = {fit['k2']:.3e} +- {sig['k2']:.1e} per photon^2")
    print(f"M_sc/M (model)    = {result['scattered_fraction']:.3f}")
    print(f"predicted k1      = {result['predicted_k1']:.3e} per photon")
    _write_csv(
        out / "contrast_scan.csv",
        ["photons", "contrast"],
        [[f"{r['photons']:.6e}", f"{r['contrast']:.6f}"] for r in result["rows"]],
    )
    _write_csv(
        out / "contrast_fit.csv",
        ["contrast_i", "k1", "k2", "sigma_ci", "sigma_k1", "sigma_k2",
         "scattered_fraction", "predicted_k1"],
        [[f"{fit['contrast_i']:.6f}", f"{fit['k1']:.6e}", f"{fit['k2']:.6e}",
          f"{sig['contrast_i']:.2e}", f"{sig['k1']:.2e}", f"{sig['k2']:.2e}",
          f"{result['scattered_fraction']:.6f}", f"{result['predicted_k1']:.6e}"]],
    )
    _write_manifest(
        out / "contrast_scan_manifest.ini", cfg, "contrast-scan",
        {"photons": ",".join(f"{m:g}" for m in m_values),
         "trials_per_phase": args.trials_per_phase},
    )
    if args.svg:
        plot = SvgPlot("Contrast vs probe photons", "probe photons", "contrast")
        plot.add_points([r["photons"] for r in result["rows"]],
                        [r["contrast"] for r in result["rows"]], "MC")
        grid = np.linspace(min(m_values), max(m_values), 100)
        plot.add_line(grid, fit["contrast_i"] - fit["k1"] * grid - fit["k2"] * grid**2,
                      "quadratic fit")
        plot.write(out / "contrast_scan.svg")
    return 0


def cmd_rotation_noise(args, cfg: RunConfig, out: Path) -> int:
    setup = _setup(cfg, ideal_readout=True)
    if setup.noise.is_zero():
        setup = ExperimentSetup(
            n_eff=setup.n_eff, contrast_i=setup.contrast_i, chain=setup.chain,
            budget=setup.budget, noise=cfg.noise, seed=setup.seed, workers=setup.workers,
        )
    rows = experiments.run_rotation_noise(setup, trials=cfg.trials, n_ref=cfg.n_eff)
    print(f"{'sequence':<14}{'channel':<18}{'analytic':>12}{'MC':>12}{'dB':>9}")
    for r in rows:
        print(
            f"{r['sequence']:<14}{r['channel']:<18}{r['analytic_rms']:>12.3e}"
            f"{r['mc_rms']:>12.3e}{r['mc_db']:>9.1f}"
        )
    _write_csv(
        out / "rotation_noise.csv",
        ["sequence", "channel", "analytic_rms_rad", "mc_rms_rad", "analytic_db", "mc_db"],
        [[r["sequence"], r["channel"], f"{r['analytic_rms']:.6e}", f"{r['mc_rms']:.6e}",
          f"{r['analytic_db']:.3f}", f"{r['mc_db']:.3f}"] for r in rows],
    )
    _write_manifest(out / "rotation_noise_manifest.ini", cfg, "rotation-noise", {})
    return 0


def cmd_solve_budget(args, cfg: RunConfig, out: Path) -> int:
    m, c = analysis.solve_budget(args.var_diff_db, args.var_cond_db)
    print(f"m/P = {m:.4f}")
    print(f"c/P = {c:.4f}")
    _write_csv(out / "budget.csv", ["m_frac", "c_frac"], [[f"{m:.6f}", f"{c:.6f}"]])
    _write_manifest(
        out / "budget_manifest.ini", cfg, "solve-budget",
        {"var_diff_db": args.var_diff_db, "var_cond_db": args.var_cond_db},
    )
    return 0


def cmd_replay(args) -> int:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(args.manifest) as fh:
            parser.read_file(fh, source=args.manifest)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {args.manifest}: {exc}")
    if not parser.has_section("manifest"):
        raise ConfigError("not a manifest: missing [manifest] section")
    command = parser.get("manifest", "command")
    argv = [command, "--out", args.out]
    for key, value in parser.items("manifest"):
        if not key.startswith("arg_"):
            continue
        name = key[4:].replace("_", "-")
        if value in ("True", "False"):
            if value == "True":
                argv.append(f"--{name}")
        else:
            argv.extend([f"--{name}", value])
    cfg_parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    for section in parser.sections():
        if section == "manifest":
            continue
        cfg_parser.add_section(section)
        for key, value in parser.items(section):
            cfg_parser.set(section, key, value)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = RunConfig.from_parser(cfg_parser)
    replay_args = build_parser().parse_args(argv)
    return _dispatch(replay_args, cfg, out)


def _dispatch(args, cfg: RunConfig, out: Path) -> int:
    handlers = {
        "calibrate-geometry": cmd_calibrate_geometry,
        "calibrate-coupling": cmd_calibrate_coupling,
        "projection-scan": cmd_projection_scan,
        "squeeze": cmd_squeeze,
        "backaction-scan": cmd_backaction_scan,
        "contrast-scan": cmd_contrast_scan,
        "rotation-noise": cmd_rotation_noise,
        "solve-budget": cmd_solve_budget,
    }
    return handlers[args.command](args, cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return cmd_replay(args)
        cfg = _apply_flag_overrides(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _dispatch(args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QndSpinError as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
