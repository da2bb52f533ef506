"""Command-line interface: config-driven runs with reproducible file outputs.

Subcommands map one-to-one onto the library's operations:

  simulate             master-equation propagation, trajectory CSV
  pulse-acf            pulse synthesis and autocorrelation CSV
  verify-phase         phase-mask invariance and sensitivity report (JSON)
  sweep-mu             coupling-strength scaling sweep (CSV + JSON slopes)
  sweep-gamma          relaxation sweep of the chirp effect (CSV + JSON)
  compare-perturbative leading-order vs exact transfer (JSONL records)

The same config plus the same binary produces byte-identical outputs: the
pipeline consults no global randomness (mask draws use a seeded generator
from the config) and numbers are printed with 17 significant digits.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import random
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as X
from . import io as out
from . import perturbation as pert
from . import pulse as P
from . import quantum_core as Q
from .config import ConfigError, RunConfig, load_config, resolve_config_arg

SIMULATE_AUTO_STORED = 4000


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wfpo",
        description="Weak-field phase-only control toolkit for a four-level "
                    "open quantum system.",
        epilog="Output directory precedence: --out, then the config's "
               "[output] directory, then $WFPO_OUT, then ./wfpo_out. "
               "--config accepts a path or a bundled name "
               "('fourlevel', 'labframe').")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="config file path or bundled config name")
        p.add_argument("--chirp", type=float, default=None,
                       help="override pulse.chirp from the config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="concurrent propagations in sweeps")
        p.add_argument("--seedless", action="store_true",
                       help="assert that no global RNG state is consumed")

    p = sub.add_parser("simulate", help="propagate the master equation once")
    common(p)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("pulse-acf", help="synthesize the pulse and write its ACF")
    common(p)
    p.set_defaults(handler=_cmd_pulse_acf)

    p = sub.add_parser("verify-phase",
                       help="phase-mask invariance and sensitivity report")
    common(p)
    p.add_argument("--masks", type=int, default=None,
                   help="number of random masks (default from config)")
    p.set_defaults(handler=_cmd_verify_phase)

    p = sub.add_parser("sweep-mu", help="coupling-strength scaling sweep")
    common(p)
    p.set_defaults(handler=_cmd_sweep_mu)

    p = sub.add_parser("sweep-gamma", help="relaxation sweep of the chirp effect")
    common(p)
    p.set_defaults(handler=_cmd_sweep_gamma)

    p = sub.add_parser("compare-perturbative",
                       help="leading-order transfer against full propagation")
    common(p)
    p.set_defaults(handler=_cmd_compare_perturbative)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _seed_guard(args.seedless):
            cfg = _load(args)
            outdir = _output_dir(args, cfg)
            args.handler(args, cfg, outdir)
        return 0
    except Exception as exc:  # report as a machine-readable record
        record = {"error": {"subcommand": args.command,
                            "type": type(exc).__name__,
                            "message": str(exc)}}
        print(json.dumps(record), file=sys.stderr)
        return 1


@contextlib.contextmanager
def _seed_guard(enabled: bool):
    if not enabled:
        yield
        return
    py_state = random.getstate()
    np_state = np.random.get_state()
    yield
    same_py = random.getstate() == py_state
    new_np = np.random.get_state()
    same_np = (np_state[0] == new_np[0] and np.array_equal(np_state[1], new_np[1])
               and np_state[2:] == new_np[2:])
    if not (same_py and same_np):
        raise RuntimeError("--seedless violated: global RNG state was consumed")


def _load(args) -> RunConfig:
    path = resolve_config_arg(args.config)
    overrides = {}
    if args.chirp is not None:
        overrides["pulse.chirp"] = args.chirp
    return load_config(path, overrides)


def _output_dir(args, cfg: RunConfig) -> Path:
    chosen = args.out or cfg.output_dir or os.environ.get("WFPO_OUT") or "wfpo_out"
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _propagation_setup(cfg: RunConfig, chirp: float):
    """Grid, field, exact field derivative and generator for one run."""
    pp = cfg.pulse
    grid = Q.propagation_time_grid(pp.bandwidth, chirp, dt=cfg.grids.dt,
                                   halfwidth=cfg.grids.time_halfwidth)
    if cfg.grids.frame == "lab":
        carrier = pp.carrier
        gen = Q.lindblad_generator(cfg.model, frame="lab", carrier=carrier)
    else:
        carrier = 0.0  # the detuning carries the carrier's effect
        gen = Q.lindblad_generator(cfg.model)
    field = P.analytic_chirped_gaussian(pp.bandwidth, chirp, carrier, grid)
    dfield = P.analytic_chirped_gaussian_derivative(pp.bandwidth, chirp, carrier, grid)
    return grid, field, dfield, gen


def _auto_stride(grid, configured: int, target_stored: int = SIMULATE_AUTO_STORED) -> int:
    if configured > 0:
        return configured
    m = (grid.n_points - 1) // 2
    return max(1, m // target_stored)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args, cfg: RunConfig, outdir: Path) -> None:
    chirp = cfg.pulse.chirp
    grid, field, _, gen = _propagation_setup(cfg, chirp)
    stride = _auto_stride(grid, cfg.grids.stride)
    traj = Q.propagate(gen, Q.ground_state(), field, stride=stride)
    path = outdir / f"trajectory_chi{chirp:+g}.csv"
    out.write_trajectory_csv(path, traj, out.config_header(cfg))
    print(f"wrote {path} ({traj.times.size} stored steps, "
          f"final excited population "
          f"{Q.population(traj.final_state, 'excited_surface'):.6e})")


def _cmd_pulse_acf(args, cfg: RunConfig, outdir: Path) -> None:
    pp = cfg.pulse
    pulse = P.synth_chirped_gaussian(pp.bandwidth, pp.chirp, pp.carrier)
    field = P.to_time_domain(pulse)
    acf = P.autocorrelation(field)
    path = outdir / "acf.csv"
    out.write_correlation_csv(path, acf, out.config_header(cfg))
    print(f"wrote {path} (C(0) = {acf.at_zero().real:.12g})")


def _cmd_verify_phase(args, cfg: RunConfig, outdir: Path) -> None:
    pp = cfg.pulse
    exp = cfg.experiment
    n_masks = exp.masks if args.masks is None else args.masks
    pulse = P.synth_chirped_gaussian(pp.bandwidth, pp.chirp, pp.carrier)
    pad = 1.25 * P.mask_group_delay_bound(pulse.grid)
    tgrid = P.default_time_grid(pp.bandwidth, pp.chirp, match=pulse.grid,
                                carrier=pp.carrier, padding=pad)
    field = P.to_time_domain(pulse, tgrid)
    acf_ref = P.autocorrelation(field)
    scale = float(np.max(np.abs(acf_ref.values)))

    prop = pert.model_propagator(cfg.model)
    table = pert.transition_table(cfg.model)
    dip = pert.dipole_operator(cfg.model)
    dn_ref = pert.delta_n_lgks(table, acf_ref, prop, dip)

    rng = np.random.default_rng(exp.mask_seed)
    worst_acf = 0.0
    dn_lo, dn_hi = dn_ref, dn_ref
    for _ in range(n_masks):
        mask = P.random_smooth_phase_mask(pulse.grid, rng)
        masked = P.to_time_domain(P.apply_phase_mask(pulse, mask), tgrid)
        acf = P.autocorrelation(masked)
        worst_acf = max(worst_acf, float(np.max(np.abs(acf.values - acf_ref.values))) / scale)
        dn = pert.delta_n_lgks(table, acf, prop, dip)
        dn_lo, dn_hi = min(dn_lo, dn), max(dn_hi, dn)
    dn_spread = (dn_hi - dn_lo) / dn_ref if dn_ref else 0.0

    xcf_ref = P.cross_correlation_with_derivative(field)
    max_c = scale
    max_d = float(np.max(np.abs(xcf_ref.values)))
    n = pulse.grid.n_points
    offsets = np.linspace(-2.0, 2.0, exp.sensitivity_bins)
    bins = [n // 2 + int(round(o * pp.bandwidth / pulse.grid.spacing))
            for o in offsets]
    sens = []
    for b in bins:
        sens.append({
            "bin": b,
            "omega": float(pulse.grid.omegas[b]),
            "acf": P.phase_sensitivity(pulse, P.ACF, b, exp.sensitivity_step),
            "xcf": P.phase_sensitivity(pulse, P.XCF, b, exp.sensitivity_step),
            "field_control": P.field_phase_sensitivity(pulse, b, exp.sensitivity_step),
        })
    worst_sens_c = max(s["acf"] for s in sens) / max_c
    worst_sens_d = max(s["xcf"] for s in sens) / max_d
    control_ok = all(s["field_control"] > 1e-6 for s in sens)

    report = {
        "masks": n_masks,
        "max_acf_deviation_rel": worst_acf,
        "delta_n_spread_rel": dn_spread,
        "acf_invariant_below_1e-8": worst_acf < 1e-8,
        "delta_n_invariant_below_1e-8": dn_spread < 1e-8,
        "sensitivities": sens,
        "max_acf_sensitivity_rel": worst_sens_c,
        "max_xcf_sensitivity_rel": worst_sens_d,
        "sensitivities_below_1e-6": (worst_sens_c < 1e-6 and worst_sens_d < 1e-6),
        "field_control_nonzero": control_ok,
    }
    path = outdir / "verify_phase.json"
    out.write_json(path, report, cfg)
    print(f"wrote {path} (max ACF deviation {worst_acf:.3e}, "
          f"transfer spread {dn_spread:.3e})")


def _cmd_sweep_mu(args, cfg: RunConfig, outdir: Path) -> None:
    exp = cfg.experiment
    mu_values = np.geomspace(exp.mu_min, exp.mu_max, exp.mu_points)
    stride = cfg.grids.stride or X.DEFAULT_STRIDE
    study = X.mu_scaling_study(cfg.model, cfg.pulse, mu_values,
                               dt=cfg.grids.dt, stride=stride, jobs=args.jobs)
    if exp.target == "excited_surface":
        dn_pos, dn_neg = study.excited_pos, study.excited_neg
    else:
        dn_pos, dn_neg = study.level2_pos, study.level2_neg
    result = X.SweepResult("mu", study.mu_values, dn_pos, dn_neg, {})
    csv_path = outdir / "sweep_mu.csv"
    out.write_sweep_csv(csv_path, result, out.config_header(cfg))

    slopes = {name: dict(zip(("slope", "stderr"), study.slope(name)))
              for name in ("excited_transfer", "excited_effect",
                           "level2_pos", "level2_neg", "residual")}
    summary = {
        "target": exp.target,
        "mu_values": study.mu_values,
        "excited_pos": study.excited_pos,
        "excited_neg": study.excited_neg,
        "level2_pos": study.level2_pos,
        "level2_neg": study.level2_neg,
        "leading_order": study.leading_order,
        "slopes": slopes,
    }
    json_path = outdir / "sweep_mu.json"
    out.write_json(json_path, summary, cfg)
    print(f"wrote {csv_path} and {json_path} "
          f"(transfer slope {slopes['excited_transfer']['slope']:.3f}, "
          f"chirp-effect slope {slopes['excited_effect']['slope']:.3f})")


def _cmd_sweep_gamma(args, cfg: RunConfig, outdir: Path) -> None:
    exp = cfg.experiment
    gammas = tuple(np.geomspace(exp.gamma_min, exp.gamma_max, exp.gamma_points))
    stride = cfg.grids.stride or X.DEFAULT_STRIDE
    spec = X.SweepSpec("gamma", gammas, cfg.model, cfg.pulse, exp.target)
    result = X.relaxation_sweep(spec, dt=cfg.grids.dt, stride=stride,
                                jobs=args.jobs)
    csv_path = outdir / "sweep_gamma.csv"
    out.write_sweep_csv(csv_path, result, out.config_header(cfg))
    baseline = X.chirp_effect(cfg.model.with_params(gamma=0.0), cfg.pulse,
                              exp.target, dt=cfg.grids.dt, stride=stride)
    summary = {
        "target": exp.target,
        "gamma_values": result.values,
        "effect": result.effect,
        "effect_at_gamma_zero": baseline.effect,
        "monotonicity": result.monotonicity,
    }
    json_path = outdir / "sweep_gamma.json"
    out.write_json(json_path, summary, cfg)
    print(f"wrote {csv_path} and {json_path}")


def _cmd_compare_perturbative(args, cfg: RunConfig, outdir: Path) -> None:
    chirp = cfg.pulse.chirp
    grid, field, dfield, gen = _propagation_setup(cfg, chirp)
    stride = _auto_stride(grid, cfg.grids.stride)
    traj = Q.propagate(gen, Q.ground_state(), field, stride=stride)
    dn_full = Q.population(traj.final_state, "excited_surface")
    de_full = None
    if cfg.grids.frame == "lab":
        de_full = pert.energy_absorption(traj, field, dfield).delta_e

    frame = cfg.grids.frame
    carrier = cfg.pulse.carrier if frame == "lab" else 0.0
    acf = P.autocorrelation(field)
    table = pert.transition_table(cfg.model, frame=frame, carrier=carrier)
    dip = pert.dipole_operator(cfg.model)
    dn_eq15 = pert.delta_n_unitary(table, acf)
    prop = pert.model_propagator(cfg.model, frame=frame, carrier=carrier)
    dn_eq17 = pert.delta_n_lgks(table, acf, prop, dip)

    params = {"mu": cfg.model.mu, "gamma": cfg.model.gamma, "chirp": chirp,
              "bandwidth": cfg.pulse.bandwidth, "detuning": cfg.model.detuning,
              "frame": frame}
    path = outdir / "results.jsonl"
    for method, dn, de in (("eq15", dn_eq15, None), ("eq17", dn_eq17, None),
                           ("full", dn_full, de_full)):
        out.append_jsonl(path, pert.transfer_record(method, dn, params, de))
    resid = abs(dn_full - dn_eq17)
    summary = {
        "delta_n_full": dn_full,
        "delta_n_eq17": dn_eq17,
        "delta_n_eq15": dn_eq15,
        "residual_full_vs_eq17": resid,
        "residual_relative": resid / dn_full if dn_full else None,
    }
    out.write_json(outdir / "compare.json", summary, cfg)
    print(f"appended 3 records to {path} "
          f"(full {dn_full:.6e}, leading order {dn_eq17:.6e})")


if __name__ == "__main__":
    sys.exit(main())
