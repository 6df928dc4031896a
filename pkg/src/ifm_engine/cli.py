"""Command-line entry point ``ifm-sim``.

Exit status: 0 on success, 1 on invalid input (bad flag, config or
parameters, unwritable output), 2 when ``compare`` or ``oracle`` finds a
deviation beyond tolerance.
"""
from __future__ import annotations

import argparse
import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

from . import analytic, bouncer, dynamics, engine, weakvalues
from .config import SECTIONS, RunConfig, apply_overrides, build_config, config_path, read_sections
from .errors import IFMError, ValidationError
from .io import emit, render_csv, render_json
from .reservoir import microscopic_oracle, oracle_params
from .statespace import Params, initial_state, standard_observables

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class Outcome:
    columns: tuple[str, ...]
    rows: list[dict]
    document: dict
    status: int = EXIT_OK


def _params_dict(p: Params) -> dict:
    return {f.name: getattr(p, f.name) for f in fields(Params)}


# ---------------------------------------------------------------------------
# subcommands


def cmd_eigenstates(cfg: RunConfig, args) -> Outcome:
    b = cfg.bouncer
    s0, s1 = bouncer.bounce_eigenstate(b, 0), bouncer.bounce_eigenstate(b, 1)
    psi_in, psi_out = bouncer.in_state(b), bouncer.out_state(b)
    z = b.z_grid / b.z0
    cols = ("z_over_z0", "psi0", "psi1", "psi_in", "psi_out")
    rows = [dict(zip(cols, vals)) for vals in zip(z, s0.wavefunction, s1.wavefunction, psi_in, psi_out)]
    levels = [bouncer.bounce_eigenstate(b, j) for j in range(b.n_levels)]
    doc = {
        "zeros": [lv.zero for lv in levels],
        "energies": [lv.energy for lv in levels],
        "gap": levels[1].energy - levels[0].energy,
        **{c: [r[c] for r in rows] for c in cols},
    }
    return Outcome(cols, rows, doc)


def cmd_fit(cfg: RunConfig, args) -> Outcome:
    b = cfg.bouncer
    fit = bouncer.fit_gaussian(b)
    height = bouncer.safe_raise_height(b, cfg.epsilon)
    row = {
        "mean_over_z0": fit.mean / b.z0,
        "sigma_over_z0": fit.sigma / b.z0,
        "overlap_probability": fit.overlap_probability,
        "epsilon": cfg.epsilon,
        "safe_raise_over_z0": height / b.z0,
    }
    return Outcome(tuple(row), [row], dict(row))


def cmd_evolve(cfg: RunConfig, args) -> Outcome:
    p = cfg.params
    result = dynamics.evolve_no_explosion(initial_state(p, interferometer=False), p, record=True, n_samples=cfg.n_times)
    tr = result.trajectory
    cols = dynamics.TRAJECTORY_COLUMNS
    rows = [dict(zip(cols, vals)) for vals in zip(*(tr[c] for c in cols))]
    doc = {"params": _params_dict(p), "survival": result.survival_probability, "trajectory": {c: tr[c] for c in cols}}
    return Outcome(cols, rows, doc)


def cmd_interfere(cfg: RunConfig, args) -> Outcome:
    p = cfg.params
    run = dynamics.run_interferometer(p)
    ref = analytic.closed_forms(p.gamma, p.tau, p.omega_ph, p.omega_m, p.hbar)
    closed = {"dark": ref.p_dk, "bright": ref.p_br, "explosion": ref.p_expl}
    cols = ("outcome", "probability", "closed_form", "E_ph", "E_m")
    rows = []
    for r in run.ports.as_rows():
        r["closed_form"] = closed[r["outcome"]]
        rows.append({c: r[c] for c in cols})
    doc = {"params": _params_dict(p), "survival": run.evolution.survival_probability, "ports": rows}
    return Outcome(cols, rows, doc)


def cmd_weak_values(cfg: RunConfig, args) -> Outcome:
    series = weakvalues.weak_value_series(None, cfg.params, n_times=cfg.n_times)
    cols = ("t_Gamma", "observable_id", "re", "im", "anomalous_flag")
    rows = series.to_rows()
    doc = {
        "params": _params_dict(cfg.params),
        "units": dict(zip(series.labels, series.units)),
        "anomalies": [asdict(a) for a in weakvalues.detect_anomalies(series)],
        "series": rows,
    }
    return Outcome(cols, rows, doc)


def cmd_backward(cfg: RunConfig, args) -> Outcome:
    p = cfg.params
    bw = weakvalues.backward_propagate(p, n_times=cfg.n_times)
    names = ("c0", "c1", "d0", "d1")
    cols = ("t_Gamma",) + tuple(f"{n}_{part}" for n in names for part in ("re", "im"))
    rows = []
    for t, coeff in zip(bw.times, bw.coefficients):
        row = {"t_Gamma": t * p.gamma}
        for n, c in zip(names, coeff):
            row[f"{n}_re"], row[f"{n}_im"] = c.real, c.imag
        rows.append(row)
    doc = {
        "params": _params_dict(p),
        "final_raw": {n: [c.real, c.imag] for n, c in zip(names, bw.final)},
        "final_normalized": {n: [c.real, c.imag] for n, c in zip(names, bw.normalized_final)},
        "abs_c0_normalized": abs(bw.normalized_final[0]),
        "expected_abs_c0": 1.0 / (2.0 * math.sqrt(2.0)),
        "norm": bw.norm,
        "sign_pattern": bw.sign_pattern(),
        "armI_max_amplitude": bw.armI_max_amplitude,
        "bound": bw.bound,
        "bound_ratio": bw.bound_ratio,
    }
    return Outcome(cols, rows, doc)


def cmd_oracle(cfg: RunConfig, args) -> Outcome:
    p = cfg.params
    report = microscopic_oracle(p, cfg.micro)
    summary = report.summary()
    rate_tol = cfg.micro_options["rate_tolerance"]
    dev_tol = cfg.micro_options["deviation_tolerance"]
    rate_ok = summary["rate_relative_error"] <= rate_tol
    dev_ok = report.max_state_deviation <= dev_tol
    summary.update({"rate_tolerance": rate_tol, "deviation_tolerance": dev_tol, "rate_ok": rate_ok, "deviation_ok": dev_ok})
    rows = [{"quantity": k, "value": v} for k, v in summary.items()]
    doc = {
        "params": _params_dict(p),
        "band": list(cfg.micro.band),
        "summary": summary,
        "series": {"t": report.times, "survival_armI": report.survival, "deviation": report.deviation},
    }
    status = EXIT_OK if rate_ok and dev_ok else EXIT_TOLERANCE
    return Outcome(("quantity", "value"), rows, doc, status)


def cmd_engine(cfg: RunConfig, args) -> Outcome:
    opts = dict(cfg.engine)
    mode = args.mode or opts.get("mode", "expectation")
    cycles = args.cycles if args.cycles is not None else int(opts.get("cycles", 1000))
    policy = engine.EnginePolicy(bright_work=opts.get("bright_work", "zero"), epsilon=cfg.epsilon, bouncer=cfg.bouncer)
    ledger = engine.run_cycle(cfg.params, mode, seed=cfg.seed, n_cycles=cycles, policy=policy, jobs=cfg.jobs)
    report = engine.audit(ledger)
    yld = engine.expected_yield(cfg.params, policy)
    rows = ledger.rows()
    doc = {
        "params": _params_dict(cfg.params),
        "mode": mode,
        "seed": cfg.seed,
        "cycles": len(ledger),
        "statistics": ledger.statistics(),
        "totals": ledger.totals(),
        "audit": asdict(report),
        "expected_yield": asdict(yld),
    }
    if args.full_json:
        doc["records"] = rows
    return Outcome(engine.LEDGER_COLUMNS, rows, doc)


def _compare_rows(p: Params) -> list[dict]:
    rows = []

    def add(quantity, reference, expected, numeric, tol, relative=False):
        dev = abs(numeric - expected)
        rel = dev / abs(expected) if expected != 0 else (0.0 if dev == 0 else math.inf)
        checked = tol is not None
        passed = (rel if relative else dev) <= tol if checked else True
        rows.append({
            "quantity": quantity, "reference": reference, "analytic": expected, "numeric": numeric,
            "abs_dev": dev, "rel_dev": rel, "tolerance": tol if checked else math.nan,
            "checked": int(checked), "passed": int(passed),
        })

    ref = analytic.closed_forms(p.gamma, p.tau, p.omega_ph, p.omega_m, p.hbar)
    run = dynamics.run_interferometer(p)
    single = dynamics.run_single_arm(p)
    ports = run.ports
    add("p_ne_single", "closed_form", ref.p_ne_single, single.survival_probability, 1e-8)
    add("p_ne_interf", "closed_form", ref.p_ne_interf, run.evolution.survival_probability, 1e-8)
    add("p_dk", "closed_form", ref.p_dk, ports.p_dark, 1e-6)
    add("p_br", "closed_form", ref.p_br, ports.p_bright, 1e-6)
    add("p_expl", "closed_form", ref.p_expl, ports.p_explosion, 1e-6)
    energy_tol = 0.02 * p.hbar * p.omega_m
    if "dark" in ports.energies:
        add("E_dk_ph", "closed_form", ref.E_dk_ph, ports.energies["dark"]["E_ph"], energy_tol)
        add("E_dk_m", "closed_form", ref.E_dk_m, ports.energies["dark"]["E_m"], energy_tol)
    add("E_br_ph", "closed_form", ref.E_br_ph, ports.energies["bright"]["E_ph"], energy_tol)
    add("E_br_m", "closed_form", ref.E_br_m, ports.energies["bright"]["E_m"], energy_tol)
    if p.gamma * p.tau > 0:
        setup = weakvalues.TwoStateSetup.build(p)
        obs = standard_observables()
        t = 0.5 * p.tau
        wv = analytic.analytic_weak_values(p.gamma, p.tau, t, p.omega_ph, p.omega_m, p.hbar)
        # the in/out split mixes photon modes omega_m apart, so it carries the
        # wavepacket-overlap correction of order (omega_m / d_omega)^2
        overlap_tol = (p.omega_m / p.delta_omega_ph) ** 2
        for label in ("Pi_I,0", "Pi_I,1", "Pi_I", "Pi_II", "Pi_I,in", "Pi_II,in"):
            num = weakvalues.weak_value(obs[label], t, p, setup=setup).real
            tol = overlap_tol if label.endswith(",in") else 1e-8
            add(f"weak {label} (t=tau/2)", "consistent", wv.consistent[label], num, tol)
            add(f"weak {label} (t=tau/2)", "printed", wv.printed[label], num, None)
    return rows


def cmd_compare(cfg: RunConfig, args) -> Outcome:
    rows = _compare_rows(cfg.params)
    cols = ("quantity", "reference", "analytic", "numeric", "abs_dev", "rel_dev", "tolerance", "checked", "passed")
    failed = [r["quantity"] for r in rows if not r["passed"]]
    doc = {"params": _params_dict(cfg.params), "rows": rows, "failed": failed}
    return Outcome(cols, rows, doc, EXIT_TOLERANCE if failed else EXIT_OK)


COMMANDS = {
    "eigenstates": (cmd_eigenstates, "Bouncing-ball eigenstates on the z grid.",
                    "z_over_z0, psi0, psi1, psi_in, psi_out"),
    "fit": (cmd_fit, "Gaussian fit to the |in> state and the work-free platform raise.",
            "mean_over_z0, sigma_over_z0, overlap_probability, epsilon, safe_raise_over_z0"),
    "evolve": (cmd_evolve, "Single-arm photon-bomb evolution without interferometer.",
               ", ".join(dynamics.TRAJECTORY_COLUMNS)),
    "interfere": (cmd_interfere, "Interferometer run with the output-port table.",
                  "outcome, probability, closed_form, E_ph, E_m"),
    "weak-values": (cmd_weak_values, "Weak values under dark-port post-selection (Hamiltonians in hbar*gamma).",
                    "t_Gamma, observable_id, re, im, anomalous_flag"),
    "backward": (cmd_backward, "Backward-propagated post-selected state coefficients.",
                 "t_Gamma, c0_re, c0_im, c1_re, c1_im, d0_re, d0_im, d1_re, d1_im"),
    "oracle": (cmd_oracle, "Kraus channel against a discretized microscopic absorber (exit 2 on tolerance failure).",
               "quantity, value"),
    "engine": (cmd_engine, "Engine cycles with energy ledger and audit.",
               ", ".join(engine.LEDGER_COLUMNS)),
    "compare": (cmd_compare, "Closed forms against the grid simulation (exit 2 on tolerance failure).",
                "quantity, reference, analytic, numeric, abs_dev, rel_dev, tolerance, checked, passed"),
}


def base_params(command: str) -> Params:
    if command in ("weak-values", "backward"):
        return Params.weak_value_defaults()
    if command == "oracle":
        return oracle_params()
    return Params()


# ---------------------------------------------------------------------------
# argument handling


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="INI config (default: $IFM_SIM_DEFAULT_CONFIG)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. --set params.tau=10 (repeatable)")
    parser.add_argument("--out", metavar="PATH", help="output file (default: stdout); a directory for sweep")
    parser.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    parser.add_argument("--precision", type=int, metavar="N", help="significant digits, 6..17 (default 12)")
    parser.add_argument("--seed", type=int, metavar="N", help="random seed")
    parser.add_argument("--jobs", type=int, metavar="N", help="parallel workers")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ifm-sim", description="Interaction-free measurement engine simulator.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, summary, columns) in COMMANDS.items():
        sp = sub.add_parser(name, help=summary, description=f"{summary} CSV columns: {columns}.")
        _common(sp)
        if name == "engine":
            sp.add_argument("--mode", choices=("expectation", "sampled"))
            sp.add_argument("--cycles", type=int, metavar="N")
            sp.add_argument("--full-json", action="store_true", help="include every cycle record in JSON output")
    sw = sub.add_parser(
        "sweep",
        help="Cartesian parameter sweep of another subcommand.",
        description="Runs COMMAND at every combination of the --vary values, one output file per point "
                    "(point_NNNN.csv|json in --out), plus index.csv with columns: point, <varied keys>, status, file.",
    )
    sw.add_argument("target", choices=[c for c in COMMANDS], metavar="COMMAND")
    sw.add_argument("--vary", action="append", default=[], metavar="KEY=V1,V2,...", required=True)
    _common(sw)
    return parser


def _load(args, command: str) -> RunConfig:
    values = read_sections(config_path(args.config))
    overrides = list(args.overrides)
    if args.format:
        overrides.append(f"output.format={args.format}")
    if args.precision is not None:
        overrides.append(f"output.precision={args.precision}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.jobs is not None:
        overrides.append(f"run.jobs={args.jobs}")
    if args.out:
        overrides.append(f"output.path={args.out}")
    apply_overrides(values, overrides)
    return build_config(values, base_params(command), micro_default=(command == "oracle"))


def _render(outcome: Outcome, cfg: RunConfig) -> str:
    if cfg.output.format == "json":
        return render_json(outcome.document, cfg.output.precision)
    return render_csv(outcome.rows, outcome.columns, cfg.output.precision)


def _check_writable(path: str | None) -> None:
    if path in (None, "-"):
        return
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
        raise ValidationError(f"cannot write to {path}")
    if os.path.isdir(path):
        raise ValidationError(f"{path} is a directory")


def run_command(command: str, args) -> int:
    cfg = _load(args, command)
    _check_writable(cfg.output.path)
    for message in cfg.params.regime_violations():
        print(f"note: regime check: {message}", file=sys.stderr)
    outcome = COMMANDS[command][0](cfg, args)
    try:
        emit(_render(outcome, cfg), cfg.output.path)
    except OSError as exc:
        raise ValidationError(f"cannot write output: {exc.strerror}") from exc
    return outcome.status


def _sweep_point(argv: list[str]) -> int:
    return main(argv)


def run_sweep(args) -> int:
    if not args.out:
        raise ValidationError("sweep needs --out DIRECTORY")
    axes = []
    for item in args.vary:
        if "=" not in item:
            raise ValidationError(f"--vary expects key=v1,v2,..., got {item!r}")
        key, raw = item.split("=", 1)
        values = [v.strip() for v in raw.split(",") if v.strip()]
        if not values:
            raise ValidationError(f"--vary {key} has no values")
        axes.append((key.strip(), values))
    # validate keys and values up front so a typo fails before any work starts
    probe = {s: {} for s in SECTIONS}
    apply_overrides(probe, [f"{k}={v}" for k, vals in axes for v in vals])
    os.makedirs(args.out, exist_ok=True)
    fmt = args.format or "csv"
    common = []
    if args.config:
        common += ["--config", args.config]
    for item in args.overrides:
        common += ["--set", item]
    common += ["--format", fmt]
    if args.precision is not None:
        common += ["--precision", str(args.precision)]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    jobs = args.jobs or 1
    points = list(itertools.product(*(vals for _, vals in axes)))
    argvs, files = [], []
    for i, combo in enumerate(points):
        fname = f"point_{i:04d}.{fmt}"
        files.append(fname)
        argv = [args.target, *common, "--out", os.path.join(args.out, fname)]
        for (key, _), value in zip(axes, combo):
            argv += ["--set", f"{key}={value}"]
        argvs.append(argv)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(_sweep_point, argvs))
    else:
        statuses = [_sweep_point(a) for a in argvs]
    cols = ("point",) + tuple(k for k, _ in axes) + ("status", "file")
    rows = [
        {"point": i, **{k: v for (k, _), v in zip(axes, combo)}, "status": st, "file": f}
        for i, (combo, st, f) in enumerate(zip(points, statuses, files))
    ]
    emit(render_csv(rows, cols, 12), os.path.join(args.out, "index.csv"))
    return max(statuses) if statuses else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = make_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_INVALID
        if args.command == "sweep":
            return run_sweep(args)
        return run_command(args.command, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (IFMError, ValueError) as exc:
        print(f"ifm-sim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
