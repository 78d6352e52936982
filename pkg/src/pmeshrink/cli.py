"""Command-line front end.

Subcommands ``shoot``, ``verify-profile``, ``simulate``, ``sweep`` and
``acceptance``.  Each writes its results (JSON reports, CSV series) and an
echo of the effective configuration (``config.json``) into the output
directory.  Exit codes: 0 pass, 1 failed check or criterion, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import __version__, io, pde, verify
from .acceptance import AcceptanceContext, run_all
from .asymptotics import fit_interface, interface_bounds_check, phase_transform, tail_window
from .config import OUTPUT_ROOT_ENV, RunConfig, Task, parse_config, preset_names
from .errors import ConfigError, InsufficientTail, PmeShrinkError
from .params import Params, exponents, shrinking_radius
from .profile import ProfileClass, ProfileSolution, Termination
from .shooting import ShootingOptions, ShootingResult, solve

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("pmeshrink")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def shooting_options(cfg: RunConfig) -> ShootingOptions:
    opts = dict(cfg.section("shoot"))
    xi_init = opts.pop("xi_init")
    base = ShootingOptions(**opts)
    if xi_init is not None:
        base = replace(base, integration=replace(base.integration, xi_init=xi_init))
    return base


def _header(cfg: RunConfig, tolerances: dict | None = None, **extra) -> dict:
    return io.header(cfg.params, tolerances, task=cfg.task.value, seed=cfg.seed, **extra)


def _prepare_output(cfg: RunConfig) -> Path:
    cfg.output.mkdir(parents=True, exist_ok=True)
    io.write_json(cfg.output / "config.json", cfg.effective(), _header(cfg))
    return cfg.output


def _shoot(cfg: RunConfig, params: Params | None = None) -> ShootingResult:
    p = params or cfg.params
    return solve(p, exponents(p), shooting_options(cfg))


def profile_columns(res: ShootingResult) -> dict:
    prof = res.profile
    return {"xi": prof.xi, "F": prof.F, "dF": prof.dF, "f": prof.f}


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------


def run_shoot(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    res = _shoot(cfg)
    tol = {"bracket_tol": cfg.section("shoot")["bracket_tol"]}
    hdr = _header(cfg, tol)
    io.write_json(out / "shoot.json", res.as_dict(), hdr)
    io.write_csv(out / "profile.csv", profile_columns(res), hdr)
    io.write_json(out / "timings.json", {"elapsed": res.elapsed}, hdr, keep_timings=True)
    print(f"a* = {res.a_star:.17g}  xi0* = {res.xi0_star:.17g}  "
          f"relative width = {res.relative_width:.3g}  residual = {res.residual:.3g}")
    return EXIT_OK


def verify_profile(cfg: RunConfig, res: ShootingResult | None = None) -> dict:
    """Profile-level checks of a converged shooting result."""
    p = cfg.params
    exps = exponents(p)
    opts = cfg.section("verify")
    res = res or _shoot(cfg)
    prof = res.profile
    report: dict = {"shoot": {k: v for k, v in res.as_dict().items()
                              if k in ("a_star", "xi0_star", "relative_width", "residual")}}
    checks: dict = {}
    try:
        fit = fit_interface(prof, exps, tail_window(prof, opts["window_decades"]))
        checks["interface_fit"] = dict(fit.as_dict(), ok=bool(
            fit.exponent_rel_error <= 0.02 and fit.amplitude_rel_error <= 0.05))
    except InsufficientTail as exc:
        checks["interface_fit"] = {"ok": False, "error": str(exc)}
    checks["interface_bounds"] = interface_bounds_check(
        prof, exps, res.xi0_star, rtol=opts["bounds_rtol"]).as_dict()
    phase = phase_transform(prof, exps, xi0=res.xi0_star)
    checks["phase"] = {"variant": phase.variant.value, "y_star": phase.y_star_theory,
                       "sign_violations": phase.sign_violations(),
                       "ok": phase.sign_violations() == 0}
    checks["series"] = verify.series_consistency(p, exps, n_points=opts["series_points"]).as_dict()
    checks["pme"] = verify.pme_comparison(p, exps, res.a_star, n_points=opts["pme_points"]).as_dict()
    checks["ordering"] = verify.ordering_check(
        p, exps, res.a_star, n_pairs=opts["ordering_pairs"],
        rng=np.random.default_rng(cfg.seed)).as_dict()
    checks["ordering"]["ok"] = checks["ordering"]["n_violations"] == 0
    report["checks"] = checks
    report["ok"] = all(bool(c.get("ok")) for c in checks.values())
    return report


def load_shoot(directory: str | Path, params: Params) -> ShootingResult:
    """Rebuild a :class:`ShootingResult` from the files written by ``shoot``.

    The dense output is replaced by the cubic Hermite interpolant of the
    stored ``(xi, F, F')`` samples.
    """
    directory = Path(directory)
    hdr, cols = io.read_csv(directory / "profile.csv")
    if hdr.get("params") != params.as_dict():
        raise ConfigError(f"profile was computed for {hdr.get('params')}, not {params.as_dict()}",
                          field="verify.profile")
    _, data = io.read_json(directory / "shoot.json")
    xi, F, dF = cols["xi"], cols["F"], cols["dF"]
    spline = CubicHermiteSpline(xi, np.vstack([F, dF]), np.vstack([dF, np.gradient(dF, xi)]),
                                axis=1)
    prof = ProfileSolution(a=data["a_star"], xi=xi, F=F, dF=dF, m=params.m,
                           cls=ProfileClass.UNDECIDED, termination=Termination.MAX_XI_REACHED,
                           dense=spline, meta={"source": str(directory)})
    return ShootingResult(
        a_star=data["a_star"], bracket=tuple(data["bracket"]),
        iterations=[tuple(it) for it in data["iterations"]],
        bracket_history=[tuple(b) for b in data["bracket_history"]], profile=prof,
        xi0_star=data["xi0_star"], residual=data["residual"],
        undecided_events=data["undecided_events"], tail_log=data["tail_log"])


def run_verify(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    source = cfg.section("verify")["profile"]
    res = load_shoot(source, cfg.params) if source else _shoot(cfg)
    report = verify_profile(cfg, res)
    hdr = _header(cfg, {"bounds_rtol": cfg.section("verify")["bounds_rtol"],
                        "exponent_rel": 0.02, "amplitude_rel": 0.05, "series_order": 0.3})
    io.write_json(out / "verify.json", report, hdr)
    io.write_csv(out / "profile.csv", profile_columns(res), hdr)
    if cfg.section("verify")["phase_csv"]:
        ph = phase_transform(res.profile, exponents(cfg.params), xi0=res.xi0_star)
        io.write_csv(out / "phase.csv", {"xi": ph.xi, "eta": ph.eta, "X": ph.X, "Y": ph.Y,
                                         "Z": ph.Z}, dict(hdr, variant=ph.variant.value))
    for name, chk in report["checks"].items():
        print(f"[{'PASS' if chk.get('ok') else 'FAIL'}] {name}")
    return EXIT_OK if report["ok"] else EXIT_FAIL


def initial_datum(cfg: RunConfig):
    """Initial datum callable and the self-similar table when one was computed."""
    sim = cfg.section("simulate")
    init = sim["initial"]
    exps = exponents(cfg.params)
    table = None
    if init["kind"] == "selfsimilar" or sim["rescaled_error"]:
        res = _shoot(cfg)
        table = pde.SelfSimilarProfile.from_solution(res.profile, res.xi0_star)
    kind = init["kind"]
    if kind == "bump":
        u0 = pde.bump(init["delta"], init["r0"])
    elif kind == "constant":
        u0 = pde.constant(init["c"])
    elif kind == "capped-stationary":
        u0 = pde.capped_stationary(exps, init["cap"])
    else:
        u0 = pde.self_similar_datum(table, exps, sim["t0"])
    return u0, table


def check_domain(cfg: RunConfig, state: pde.RadialState) -> bool:
    """Warn when ``r_max`` may cut the solution: it should exceed the initial
    support and twice the shrinking radius ``R(t_end)``."""
    sim = cfg.section("simulate")
    r_max = state.grid.r_max
    ok = True
    inner = state.u[:-1] > 0
    if inner.any() and state.u[-2] > 0:
        log.warning("initial datum is positive up to r_max=%g; the Dirichlet condition "
                    "truncates it", r_max)
        ok = False
    if state.sup > 0:
        horizon = sim["t_end"] - sim["t0"]
        R = shrinking_radius(cfg.params, state.sup, horizon)
        if r_max < 2.0 * R:
            log.warning("r_max=%g is below 2R(%g)=%g; boundary truncation is possible",
                        r_max, horizon, 2.0 * R)
            ok = False
    return ok


def log_times(sim: dict) -> np.ndarray:
    n = sim["n_log"]
    if sim["log_spacing"] == "log":
        return np.geomspace(sim["t0"], sim["t_end"], n + 1)[1:]
    return np.linspace(sim["t0"], sim["t_end"], n + 1)[1:]


def simulate(cfg: RunConfig):
    p = cfg.params
    exps = exponents(p)
    sim = cfg.section("simulate")
    grid = pde.RadialGrid(sim["r_max"], sim["n_cells"])
    u0, table = initial_datum(cfg)
    state = pde.init_state(grid, u0, p, t0=sim["t0"])
    check_domain(cfg, state)
    eps = sim["eps_supp"] if sim["eps_supp"] is not None else 1e-10 * max(state.sup, 1e-300)
    observers = {
        "sup_norm": pde.sup_norm,
        "origin_value": pde.origin_value,
        "support_radius": lambda s: pde.support_radius(s, eps),
    }
    if table is not None and sim["rescaled_error"]:
        observers["rescaled_error"] = (
            lambda s: pde.rescaled_error(s, exps, table) if s.t > 0 else math.nan)
    dt = sim["dt"] if sim["dt"] is not None else grid.dr
    policy = pde.DtPolicy(dt, sim["kappa"], sim["dt_max"])
    return pde.run(state, sim["t_end"], policy, p, exps, observers=observers,
                   log_times=log_times(sim), keep_snapshots=sim["snapshots"])


def run_simulate(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    traj = simulate(cfg)
    sim = cfg.section("simulate")
    hdr = _header(cfg, {"newton_tol": pde.NewtonOptions().tol, "eps_supp": sim["eps_supp"]})
    cols = {"t": traj.times, **traj.records}
    io.write_csv(out / "timeseries.csv", cols, hdr)
    summary = {"n_steps": traj.n_steps, "n_halvings": traj.n_halvings,
               "t_final": traj.final.t, "sup_final": traj.final.sup,
               "dr": traj.final.grid.dr}
    io.write_json(out / "simulate.json", summary, hdr)
    if sim["snapshots"]:
        snap = {"r": traj.final.grid.nodes}
        for s in traj.snapshots:
            snap[f"u(t={s.t:.17g})"] = s.u
        io.write_csv(out / "snapshots.csv", snap, hdr)
    print(f"{traj.n_steps} steps to t = {traj.final.t:.6g}; sup u = {traj.final.sup:.6g}")
    return EXIT_OK


def _sweep_point(args: tuple) -> dict:
    params, shoot_opts, decades = args
    row = {"m": params.m, "q": params.q, "sigma": params.sigma, "N": params.N}
    try:
        exps = exponents(params)
        res = solve(params, exps, shoot_opts)
        row.update(a_star=res.a_star, xi0_star=res.xi0_star,
                   relative_width=res.relative_width, residual=res.residual, status="ok")
        try:
            fit = fit_interface(res.profile, exps, tail_window(res.profile, decades))
            row.update(exponent_fit=fit.exponent_fit, exponent_theory=fit.exponent_theory,
                       amplitude_fit=fit.amplitude_fit, amplitude_theory=fit.amplitude_theory)
        except InsufficientTail:
            row["status"] = "insufficient-tail"
    except PmeShrinkError as exc:
        row["status"] = type(exc).__name__
    return row


SWEEP_COLUMNS = ("m", "q", "sigma", "N", "a_star", "xi0_star", "relative_width", "residual",
                 "exponent_fit", "exponent_theory", "amplitude_fit", "amplitude_theory", "status")


def sweep(cfg: RunConfig) -> list[dict]:
    """Shoot at each sweep value; independent points may run in parallel processes."""
    sw = cfg.section("sweep")
    values = sw["values"]
    if values is None:
        raise ConfigError("a sweep needs a list of values", field="sweep.values")
    base = cfg.params.as_dict()
    jobs = [(Params(**dict(base, **{sw["parameter"]: v})), shooting_options(cfg),
             cfg.section("verify")["window_decades"]) for v in values]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    return [{k: r.get(k, math.nan) for k in SWEEP_COLUMNS} for r in rows]


def run_sweep(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    rows = sweep(cfg)
    hdr = _header(cfg, {"bracket_tol": cfg.section("shoot")["bracket_tol"]},
                  sweep=cfg.section("sweep"))
    io.write_csv(out / "sweep.csv", {k: [r[k] for r in rows] for k in SWEEP_COLUMNS}, hdr)
    io.write_json(out / "sweep.json", rows, hdr)
    n_bad = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} sweep points, {n_bad} not ok")
    return EXIT_OK if n_bad == 0 else EXIT_NUMERICAL


def run_acceptance(cfg: RunConfig) -> tuple[int, list[dict]]:
    """Run the acceptance criteria; exit code 1 if any fails."""
    out = _prepare_output(cfg)
    acc = cfg.section("acceptance")
    ctx = AcceptanceContext(params=cfg.params, seed=cfg.seed, shooting=shooting_options(cfg),
                            fast=acc["fast"])

    def progress(res):
        print(res.line(), flush=True)

    results = run_all(ctx, acc["criteria"], progress=progress)
    report = [r.as_dict() for r in results]
    hdr = _header(cfg, {"criteria": "stated per criterion"})
    io.write_json(out / "acceptance.json", {"criteria": report,
                                            "passed": all(r.passed for r in results)}, hdr)
    io.write_json(out / "timings.json", {r.number: {"elapsed": r.elapsed} for r in results}, hdr,
                  keep_timings=True)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return (EXIT_OK if n_fail == 0 else EXIT_FAIL), report


RUNNERS = {
    Task.SHOOT: run_shoot,
    Task.VERIFY_PROFILE: run_verify,
    Task.SIMULATE: run_simulate,
    Task.SWEEP: run_sweep,
    Task.ACCEPTANCE: lambda cfg: run_acceptance(cfg)[0],
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmeshrink",
        description="Self-similar profiles and radial simulations for the porous medium "
                    "equation with inhomogeneous strong absorption.",
        epilog=f"Relative output directories are placed under ${OUTPUT_ROOT_ENV} when it is set. "
               "Exit codes: 0 pass, 1 check failed, 2 configuration error, 3 numerical failure.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--list-presets", action="store_true", help="print the preset names and exit")
    sub = parser.add_subparsers(dest="command")
    for task in Task:
        sp = sub.add_parser(task.value, help=f"run the {task.value} task")
        sp.add_argument("--config", "-c", help="JSON configuration file")
        sp.add_argument("--preset", help="named parameter preset")
        sp.add_argument("--m", type=float)
        sp.add_argument("--q", type=float)
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--N", "--dim", dest="N", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--bracket-tol", type=float, help="relative bracket width of the shooting")
        sp.add_argument("--xi-init", type=float, help="series hand-off point of the integrations")
        sp.add_argument("--out", "-o", help="output directory")
        sp.add_argument("--jobs", "-j", type=int, help="worker processes (sweep)")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one option, e.g. simulate.t_end=2 (value parsed as JSON)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if task is Task.ACCEPTANCE:
            sp.add_argument("--criteria", type=int, nargs="+", help="subset of criteria to run")
    return parser


def _parse_value(text: str):
    import json
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def overrides_from_args(args: argparse.Namespace) -> dict:
    over: dict = {}
    for key in ("preset", "m", "q", "sigma", "N", "seed", "jobs"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if args.out is not None:
        over["output"] = args.out
    for flag, key in (("bracket_tol", "bracket_tol"), ("xi_init", "xi_init")):
        val = getattr(args, flag, None)
        if val is not None:
            over.setdefault("shoot", {})[key] = val
    if getattr(args, "criteria", None):
        over.setdefault("acceptance", {})["criteria"] = args.criteria
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"expected SECTION.KEY=VALUE, got {item!r}", field="--set")
        path, value = item.split("=", 1)
        node = over
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{part!r} is not a section", field=path)
        node[parts[-1]] = _parse_value(value)
    return over


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_presets:
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, overrides_from_args(args), task=args.command)
        return RUNNERS[cfg.task](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PmeShrinkError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
