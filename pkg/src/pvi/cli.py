"""Command-line entry point ``pvi``.

Every subcommand reads a scenario file, writes ``report.json`` (plus CSV
series and PVIGRID1 snapshots where applicable) into ``--out`` and exits
with 0 when all checks pass, 1 when a check fails, 2 for scenario or usage
errors and 3 for numerical errors.  Failures also leave ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PviError, ValidationError
from .gridio import write_csv, write_snapshot
from .scenario import Scenario, interface_samples, load_scenario, parse_scenario

COMMANDS = ("analyze", "stability", "solve2d", "compat", "smooth-test")


# ----------------------------------------------------------------------------
# serialisation


def _plain(x):
    """Convert numpy containers and scalars to JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _header(command: str, sc: Scenario, seed_override) -> dict:
    return {
        "command": command,
        "version": __version__,
        "scenario_hash": sc.source_hash,
        "scenario": sc.to_dict(),
        "grid": {"n1": sc.grid.n1, "n_tan": list(sc.grid.n_tan), "L": sc.grid.L, "period": 2 * np.pi},
        "seed_override": seed_override,
    }


# ----------------------------------------------------------------------------
# subcommands; each returns (results, checks) and may write extra artifacts


def run_analyze(sc: Scenario, out: Path, threads: int):
    from .assembly import boundary_matrices, normal_vector
    from .spectral import inertia, multiplicity_scan, verify_boundary_identity

    s = interface_samples(sc)
    d, eps = sc.d, sc.eps
    orig = boundary_matrices(s.state, np.zeros_like(s.state.v), s.dphi_t, s.grad_phi, sc.eos)
    ref = boundary_matrices(s.state, s.state.v, s.dphi_t, s.grad_phi, sc.eos, reformed=True)
    p_in = np.array(inertia(orig.Ab_plus)).T
    r_in = np.array(inertia(ref.full())).T
    ev_plus = np.sort(np.linalg.eigvals(orig.Ab_plus).real, -1)
    ev_vac = np.sort(np.linalg.eigvals(orig.Ab_minus).real, -1)
    nN = np.linalg.norm(normal_vector(s.grad_phi), axis=-1)
    shift = -eps * s.dphi_t
    closed = np.sort(np.stack([shift] * (d - 1) + [shift - nN] * (d - 1) + [shift + nN] * (d - 1), -1), -1)
    vac_dev = float(np.max(np.abs(ev_vac - closed)))
    ident = verify_boundary_identity(s.state, s.dphi_t, s.grad_phi, sc.eos)
    mult = {f: multiplicity_scan(s.state, s.state.v if f == "reformed" else np.zeros_like(s.state.v),
                                 s.dphi_t, s.grad_phi, sc.eos, f).classification
            for f in ("original", "reformed")}
    checks = {
        "plasma_inertia": bool(np.all(p_in == [1, 1, 2 * d])),
        "reformed_inertia": bool(np.all(r_in == [d, d, 3 * d - 1])),
        "vacuum_closed_forms": vac_dev < 1e-10,
        "boundary_identity": ident.residual < 1e-9 * max(ident.scale, 1.0),
    }
    results = {
        "samples": int(ev_vac.shape[0]),
        "plasma_inertia": p_in,
        "reformed_inertia": r_in,
        "plasma_eigenvalues": ev_plus,
        "vacuum_eigenvalues": ev_vac,
        "vacuum_closed_form": closed,
        "vacuum_closed_form_max_deviation": vac_dev,
        "identity_residual": ident.residual,
        "multiplicity": mult,
    }
    cols = {"sample": np.arange(ev_vac.shape[0]), "dphi_t": s.dphi_t, "normal_norm": nN}
    cols.update({f"vacuum_ev{k}": ev_vac[:, k] for k in range(ev_vac.shape[1])})
    cols.update({f"closed_form{k}": closed[:, k] for k in range(closed.shape[1])})
    write_csv(out / "vacuum_spectrum.csv", cols)
    return results, checks


def run_stability(sc: Scenario, out: Path, threads: int):
    from .criteria import evaluate_criteria, jump_residual, stability3d_values

    s = interface_samples(sc)
    rep = evaluate_criteria(s.U, s.u, s.grad_phi, sc.eps, sc.criteria.delta, sc.criteria.delta0)
    jump = float(np.max(np.abs(jump_residual(s.U, s.u, s.dphi_t, s.grad_phi, sc.eps))))
    results = rep.to_dict()
    results["jump_residual"] = jump
    if sc.d == 3:
        vals = stability3d_values(s.U, s.u, s.grad_phi, sc.eps)
        write_csv(out / "stability.csv", {"sample": np.arange(vals.size), "value": vals})
    checks = dict(rep.verdicts)
    checks["jump_conditions"] = jump < 1e-10
    return results, checks


def run_solve2d(sc: Scenario, out: Path, threads: int):
    from .scenario import linear_problem
    from .solver2d import energy_monitor, fixed_point_solve, interface_residuals, prepare

    problem = linear_problem(sc)
    setup = prepare(problem)
    res = fixed_point_solve(problem, tol=sc.run.tol, max_iter=sc.run.max_iter, setup=setup)
    grid = problem.grid
    dt = float(res.times[1] - res.times[0])
    dx2 = grid.dx_tan[0]
    iface = interface_residuals(res, problem)
    growth = energy_monitor(res, problem, setup=setup)
    series = {
        "time": res.times,
        "energy": res.energy,
        "flux": res.flux,
        "front_l2": np.sqrt(np.sum(res.psi**2, -1) * dx2),
    }
    series.update({k.replace(".", "_"): v for k, v in res.constraints.items()})
    write_csv(out / "series.csv", series)
    write_csv(
        out / "iterations.csv",
        {
            "iteration": [it["iteration"] for it in res.iterations],
            "increment": [it["increment"] for it in res.iterations],
            "ratio": [np.nan if it["ratio"] is None else it["ratio"] for it in res.iterations],
        },
    )
    if sc.run.snapshots:
        spacing = (dt, grid.dx1, dx2)
        write_snapshot(out / "fields.pvigrid", np.moveaxis(res.Z, -1, 0), spacing, problem.eps, 2)
        write_snapshot(out / "front.pvigrid", res.psi[None, :, None, :], (dt, 0.0, dx2), problem.eps, 2)
    results = {
        "converged": res.converged,
        "iterations": len(res.iterations),
        "ratios": res.ratios,
        "final_increment": res.iterations[-1]["increment"],
        "scale": res.scale,
        "steps": len(res.times) - 1,
        "dt": dt,
        "energy_max": float(np.max(res.energy)),
        "flux_max": float(np.max(np.abs(res.flux))),
        "constraints_max": {k: float(np.max(v)) for k, v in res.constraints.items()},
        "interface_residual_max": [float(np.max(np.abs(iface[..., k]))) for k in range(iface.shape[-1])],
        "growth_rate": growth.growth_rate,
    }
    checks = {"converged": res.converged, "finite": bool(np.all(np.isfinite(res.Z)))}
    return results, checks


def run_compat(sc: Scenario, out: Path, threads: int):
    from .nonlinear import compat_check, trace_recursion
    from .scenario import initial_fields

    U0, u0, phi0 = initial_fields(sc)
    grid = sc.grid.build()
    traces = trace_recursion(U0, u0, phi0, grid, sc.eos, sc.eps, m=sc.run.m)
    rep = compat_check(traces, sc.eps, sc.run.m)
    cols = {"x2": grid.x_tan[0]}
    for j in range(rep.order + 1):
        cols[f"q_residual_{j}"] = rep.q[j]
        cols[f"e_residual_{j}"] = rep.e[j]
    for j, phi in enumerate(traces.phi):
        cols[f"phi_{j}"] = phi
    write_csv(out / "compat.csv", cols)
    results = rep.to_dict()
    results["front_traces_max"] = [float(np.max(np.abs(p))) for p in traces.phi]
    checks = {f"order_{j}": rep.max_residual(j) < sc.run.tol for j in range(rep.order + 1)}
    return results, checks


def run_smooth_test(sc: Scenario, out: Path, threads: int):
    from .nonlinear import (
        IterationLedger,
        SmootherFamily,
        SmoothingDomain,
        ledger_step,
        smooth,
        smoother_constants,
        spectral_test_family,
    )

    smooth_cfg = sc.smooth
    fam = SmootherFamily(SmoothingDomain(smooth_cfg.shape, (2 * np.pi,) * len(smooth_cfg.shape)))
    fields = spectral_test_family(fam, seed=smooth_cfg.seed)
    # one theta per task; results are gathered in input order
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda th: smoother_constants(fam, (th,), fields), smooth_cfg.thetas))
    bounded = np.concatenate([p.bounded for p in parts])
    approx = np.concatenate([p.approx for p in parts])
    rate = np.concatenate([p.rate for p in parts])
    spread = {k: float(np.max(v) / np.min(v)) for k, v in (("bounded", bounded), ("approx", approx), ("rate", rate))}
    rng = np.random.default_rng(smooth_cfg.seed)
    probe = rng.normal(size=smooth_cfg.shape)
    idem = max(float(np.max(np.abs(smooth(smooth(probe, th, fam), th, fam) - smooth(probe, th, fam))))
               for th in smooth_cfg.thetas)

    ledger_shape = (3,) + smooth_cfg.shape
    led = IterationLedger.start(rng.normal(size=ledger_shape), ledger_shape, ledger_shape, fam, smooth_cfg.theta0)
    zero = np.zeros(ledger_shape)
    worst = max(led.residuals())
    for n in range(smooth_cfg.steps):
        errs = (zero, zero, zero) if n == 0 else tuple(rng.normal(size=ledger_shape) for _ in range(3))
        ledger_step(led, *errs)
        worst = max(worst, *led.residuals())
    write_csv(out / "smoother.csv", {"theta": smooth_cfg.thetas, "bounded": bounded, "approx": approx, "rate": rate})
    results = {
        "thetas": smooth_cfg.thetas,
        "bounded": bounded,
        "approx": approx,
        "rate": rate,
        "spread": spread,
        "idempotence_max": idem,
        "ledger_steps": smooth_cfg.steps,
        "ledger_residual_max": worst,
    }
    checks = {f"spread_{k}": v < 2.0 for k, v in spread.items()}
    checks["idempotent"] = idem < 1e-12
    checks["ledger_identities"] = worst < 1e-12
    return results, checks


RUNNERS = {
    "analyze": run_analyze,
    "stability": run_stability,
    "solve2d": run_solve2d,
    "compat": run_compat,
    "smooth-test": run_smooth_test,
}

DEFAULT_SMOOTH_SCENARIO = '[ring]\nrecipe = "flat_front"\n'


# ----------------------------------------------------------------------------
# driver


def _threads(arg) -> int:
    raw = arg if arg is not None else os.environ.get("PVI_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"threads must be a positive integer, got {raw!r}", key="threads") from None
    if n < 1:
        raise ValidationError("threads must be >= 1", key="threads")
    return n


def _seed_override(raw):
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"seed override must be an integer, got {raw!r}", key="seed-override") from None
    if not 0 <= n < 2**64:
        raise ValidationError("seed override must be an unsigned 64-bit integer", key="seed-override")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pvi", description="Plasma-vacuum interface laboratory")
    parser.add_argument("--version", action="version", version=f"pvi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=name != "smooth-test", help="scenario file (TOML)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", default=None, help="worker threads (fallback: PVI_THREADS)")
        p.add_argument("--seed-override", default=None, help="replace every seed in the scenario")
    return parser


def _error_report(exc: Exception, command: str) -> dict:
    code = exc.exit_code if isinstance(exc, PviError) else 3
    return {
        "command": command,
        "version": __version__,
        "status": "error",
        "error": type(exc).__name__,
        "message": str(exc),
        "key": getattr(exc, "key", None),
        "line": getattr(exc, "line", None),
        "exit_code": code,
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        threads = _threads(args.threads)
        seed = _seed_override(args.seed_override)
        sc = load_scenario(args.scenario) if args.scenario else parse_scenario(DEFAULT_SMOOTH_SCENARIO)
        if seed is not None:
            sc = sc.with_seed(seed)
        results, checks = RUNNERS[args.command](sc, out, threads)
    except (PviError, ValueError, OSError, ArithmeticError) as exc:
        report = _error_report(exc, args.command)
        text = dumps(report)
        try:
            (out / "error.json").write_text(text)
        except OSError:
            pass
        sys.stderr.write(text)
        return report["exit_code"]
    report = _header(args.command, sc, seed)
    report["checks"] = checks
    report["status"] = "pass" if all(checks.values()) else "fail"
    report["results"] = results
    (out / "report.json").write_text(dumps(report))
    sys.stdout.write(f"pvi {args.command}: {report['status']} ({out / 'report.json'})\n")
    return 0 if report["status"] == "pass" else 1


if __name__ == "__main__":
    sys.exit(main())
