"""Command-line front end: solve, propagate, audit, selftest.

Artifacts are plain CSV/JSON.  Floats are written with ``repr`` (shortest
round-trip form) and JSON keys are sorted, so identical inputs produce
byte-identical files.  Informational timing goes to stderr only.

Exit codes: 0 success, 1 configuration or input error, 2 solve did not
reach the requested residual level (artifacts are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .ocp import SaturationFunction
from .propagator import ControlSignal, propagate
from .solver import SolverConfig, audit_solution, solve
from .superop import (
    DensityState,
    LindbladSpec,
    build_liouvillian,
    devectorize,
    lindblad_rhs,
    vectorize,
)
from .tfc import (
    ElmBasis,
    collocation_grid,
    constrained_costate,
    constrained_state,
)

OUTDIR_ENV = "LINDBLAD_OCP_OUTDIR"
PARAMS_FORMAT = "lindblad-ocp-params-v1"


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with code 1, same as config errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"error: {message}")


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _resolve_outdir(arg) -> Path:
    outdir = Path(arg if arg is not None
                  else os.environ.get(OUTDIR_ENV, "."))
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _solution_columns(sample: dict, dim: int):
    """Fixed column layout shared by solution and trajectory files."""
    n_samples = sample["t"].size
    m = sample["u"].shape[1]
    d = sample["state"].shape[1]
    header = ["t", "tau"]
    cols = [sample["t"], sample["tau"]]
    for group in ("u", "nu", "beta"):
        for l in range(m):
            header.append(f"{group}_{l}")
            cols.append(sample[group][:, l])
    for name in ("mu1", "mu2", "purity", "h_upper", "h_lower", "hamiltonian"):
        header.append(name)
        cols.append(sample[name])
    for i in range(dim):
        header.append(f"pop_{i}")
        cols.append(sample["populations"][:, i])
    for d_i in range(d):
        header.append(f"v_{d_i}")
        cols.append(sample["state"][:, d_i])
    for d_i in range(d):
        header.append(f"lam_{d_i}")
        cols.append(sample["costate"][:, d_i])
    rows = (tuple(col[i] for col in cols) for i in range(n_samples))
    return header, rows


def _problem_summary(problem) -> dict:
    return {
        "dim": problem.lindblad.dim,
        "n_controls": problem.lindblad.n_controls,
        "time_weight": problem.time_weight,
        "energy_weight": problem.energy_weight,
        "u_min": problem.u_min,
        "u_max": problem.u_max,
        "slope_c": problem.slope_c,
        "purity_constrained": problem.purity_constrained,
        "purity_floor_fraction": problem.purity_floor_fraction,
        "initial_purity": problem.initial_purity,
        "w_reg": problem.w_reg,
        "reg_schedule": list(problem.reg_schedule),
    }


def _write_params(path: Path, report):
    _write_json(path, {
        "format": PARAMS_FORMAT,
        "basis": {
            "neurons": report.basis.neurons,
            "seed": report.basis.seed,
            "weight_scale": report.basis.weight_scale,
        },
        "embedded_dim": report.params.xi_rho.shape[1],
        "channels": report.params.xi_u.shape[1],
        "include_mu": report.params.include_mu,
        "theta": [float(x) for x in report.params.pack()],
    })


def _load_params(path: Path):
    from .tfc import PinnParams

    with open(path) as handle:
        data = json.load(handle)
    if data.get("format") != PARAMS_FORMAT:
        raise ConfigError(f"{path}: not a parameter file "
                          f"(format={data.get('format')!r})")
    basis = ElmBasis(
        neurons=data["basis"]["neurons"],
        seed=data["basis"]["seed"],
        weight_scale=data["basis"]["weight_scale"],
    )
    template = PinnParams.zeros(
        basis.neurons, data["embedded_dim"], data["channels"],
        include_mu=data["include_mu"],
    )
    theta = np.asarray(data["theta"], dtype=float)
    if theta.size != template.size:
        raise ConfigError(f"{path}: parameter vector has {theta.size} "
                          f"entries, expected {template.size}")
    return basis, template.unpack(theta)


def _cmd_solve(args) -> int:
    problem, solver_config = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.verbose:
        updates["verbose"] = True
    if updates:
        solver_config = dataclasses.replace(solver_config, **updates)
    outdir = _resolve_outdir(args.outdir)

    report = solve(problem, solver_config)
    checks = audit_solution(
        problem, report.params, report.basis, report.tau,
        w_reg=report.final_w_reg,
        substeps=solver_config.resimulation_substeps,
        sharpness=solver_config.feasibility_sharpness,
    )

    tau_dense = np.linspace(0.0, 1.0, args.samples)
    header, rows = _solution_columns(report.evaluate(tau_dense),
                                     problem.lindblad.dim)
    _write_csv(outdir / "solution.csv", header, rows)

    hist_rows = []
    for k, stage in enumerate(report.stages):
        for it, loss in enumerate(stage.loss_history):
            hist_rows.append((k, stage.w_reg, it, loss))
    _write_csv(outdir / "loss_history.csv",
               ["stage", "w_reg", "iteration", "loss"], hist_rows)

    _write_json(outdir / "report.json", {
        "final_time": report.final_time,
        "loss_l2": report.loss_l2,
        "converged": report.converged,
        "total_iterations": report.total_iterations,
        "stages": [
            {
                "w_reg": s.w_reg,
                "iterations": s.iterations,
                "final_loss_l2": s.final_loss_l2,
                "true_cost": s.true_cost,
                "augmented_cost": s.augmented_cost,
                "final_time": s.final_time,
            }
            for s in report.stages
        ],
        "audit": checks.to_dict(),
        "residual_norms": report.residual_norms(),
        "problem": _problem_summary(problem),
        "solver": dataclasses.asdict(solver_config),
    })
    _write_params(outdir / "params.json", report)

    print(f"final time      {report.final_time:.6f}")
    print(f"residual l2     {report.loss_l2:.3e}")
    print(f"cost            {report.stages[-1].augmented_cost:.6f}")
    print(f"final fidelity  {checks.final_state_fidelity:.6f}")
    print(f"artifacts in    {outdir}")
    if report.loss_l2 > args.max_loss:
        print(f"error: residual l2 {report.loss_l2:.3e} exceeds "
              f"--max-loss {args.max_loss:g}", file=sys.stderr)
        return 2
    return 0


def _cmd_propagate(args) -> int:
    problem, _ = load_config(args.config)
    lind = problem.lindblad
    try:
        values = [float(x) for x in args.control.split(",")]
    except ValueError:
        raise ConfigError(f"--control: expected comma-separated numbers, "
                          f"got {args.control!r}")
    if len(values) != lind.n_controls:
        raise ConfigError(f"--control: expected {lind.n_controls} channel "
                          f"value(s), got {len(values)}")
    if not args.tf > 0:
        raise ConfigError("--tf must be positive")
    signal = ControlSignal.constant(values)
    traj = propagate(lind, problem.rho0, signal, 0.0, args.tf,
                     steps=args.steps)
    outdir = _resolve_outdir(args.outdir)

    header = ["t"] + [f"u_{l}" for l in range(lind.n_controls)] + ["purity"] \
        + [f"pop_{i}" for i in range(lind.dim)] \
        + [f"v_{d}" for d in range(traj.states.shape[1])]
    pur = traj.purities()
    pops = traj.populations()
    rows = (
        (traj.times[i], *traj.controls[i], pur[i], *pops[i], *traj.states[i])
        for i in range(traj.times.size)
    )
    _write_csv(outdir / args.output, header, rows)
    print(f"wrote {outdir / args.output} ({traj.times.size} samples)")
    return 0


def _cmd_audit(args) -> int:
    problem, solver_config = load_config(args.config)
    basis, params = _load_params(Path(args.params))
    tau = collocation_grid(solver_config.collocation_points,
                           solver_config.grid)
    checks = audit_solution(
        problem, params, basis, tau,
        substeps=args.substeps or solver_config.resimulation_substeps,
        sharpness=solver_config.feasibility_sharpness,
    )
    outdir = _resolve_outdir(args.outdir)
    _write_json(outdir / "audit.json", checks.to_dict())
    for key, value in sorted(checks.to_dict().items()):
        print(f"{key:24s} {value}")
    return 0


def _selftest_checks():
    """Fast independent sanity checks; returns (name, ok, detail) triples."""
    out = []
    rng = np.random.default_rng(0)

    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    x = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    err = np.max(np.abs(vectorize(a @ x @ b) - np.kron(b.T, a) @ vectorize(x)))
    out.append(("vectorization isomorphism", err < 1e-12, f"max err {err:.2e}"))

    spec = LindbladSpec.two_level()
    herm = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = herm @ herm.conj().T
    rho = rho / np.trace(rho)
    u = np.array([0.37])
    liou = build_liouvillian(spec, u)
    err = np.max(np.abs(devectorize(liou.complex_matrix @ vectorize(rho))
                        - lindblad_rhs(rho, spec, u)))
    out.append(("superoperator action", err < 1e-12, f"max err {err:.2e}"))

    traj = propagate(spec, DensityState.pure(1, 2), ControlSignal.constant(0.0),
                     0.0, 3.0, steps=60)
    err = np.max(np.abs(traj.populations()[:, 1] - np.exp(-0.1 * traj.times)))
    out.append(("free decay oracle", err < 1e-10, f"max err {err:.2e}"))

    sat = SaturationFunction(-3.0, 3.0, 10.0)
    grid = np.linspace(-2.0, 2.0, 10001)
    fd = np.gradient(sat.value(grid), grid)
    err = np.max(np.abs(fd[1:-1] - sat.d1(grid)[1:-1]))
    bounds_ok = bool(np.all(sat.value(grid) > -3.0)
                     and np.all(sat.value(grid) < 3.0))
    sweep = np.max(np.abs(sat.d2(np.linspace(-3.0, 3.0, 100001))))
    formula_err = abs(sweep - sat.max_abs_d2()) / sat.max_abs_d2()
    out.append(("saturation slope", err < 1e-4, f"max err {err:.2e}"))
    out.append(("saturation bounds", bounds_ok, "strict interior"))
    out.append(("saturation curvature peak", formula_err < 1e-3,
                f"rel err {formula_err:.2e}"))

    basis = ElmBasis(neurons=20, seed=3)
    xi = rng.normal(size=(20, 8))
    r0e = DensityState.pure(1, 2).embedded()
    rfe = DensityState.pure(0, 2).embedded()
    ends = constrained_state(np.array([0.0, 1.0]), xi, basis, r0e, rfe)
    err = max(np.max(np.abs(ends[0] - r0e)), np.max(np.abs(ends[1] - rfe)))
    lam_end = np.max(np.abs(constrained_costate(1.0, xi, basis)))
    out.append(("boundary-exact state", err < 1e-12, f"max err {err:.2e}"))
    out.append(("terminal costate pinned", lam_end < 1e-12,
                f"max |lam(tf)| {lam_end:.2e}"))
    return out


def _cmd_selftest(_args) -> int:
    results = _selftest_checks()
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name} ({detail})")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lindblad-ocp",
                     description="Constrained optimal control of Lindblad "
                                 "dynamics by collocation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="train a solution and write artifacts")
    p.add_argument("--config", required=True, help="YAML problem file")
    p.add_argument("--outdir", default=None,
                   help=f"output directory (default ${OUTDIR_ENV} or .)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the basis seed")
    p.add_argument("--samples", type=int, default=801,
                   help="rows in solution.csv")
    p.add_argument("--max-loss", type=float, default=1e-3,
                   help="exit 2 if the final residual l2 exceeds this")
    p.add_argument("--verbose", action="store_true",
                   help="per-stage progress on stderr")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("propagate",
                       help="integrate the dynamics under a constant control")
    p.add_argument("--config", required=True, help="YAML problem file")
    p.add_argument("--control", default="0.0",
                   help="comma-separated channel values")
    p.add_argument("--tf", type=float, required=True, help="final time")
    p.add_argument("--steps", type=int, default=None, help="time steps")
    p.add_argument("--outdir", default=None)
    p.add_argument("--output", default="trajectory.csv")
    p.set_defaults(func=_cmd_propagate)

    p = sub.add_parser("audit", help="re-check a saved parameter file")
    p.add_argument("--config", required=True, help="YAML problem file")
    p.add_argument("--params", required=True, help="params.json from solve")
    p.add_argument("--substeps", type=int, default=None,
                   help="resimulation substeps per interval")
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("selftest", help="run fast internal consistency checks")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return exc.code if exc.code is not None else 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
