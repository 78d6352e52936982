"""Acceptance pipeline: one function per criterion, each returning a verdict.

Every check is run at its stated tolerance.  The functions share a small
cache of shooting results so that the profile-level criteria reuse the
converged profiles of the shooting criterion.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import pde, verify
from .asymptotics import (
    PhaseVariant,
    fit_interface,
    interface_bounds_check,
    phase_transform,
    tail_window,
)
from .errors import NonMonotoneClassification
from .params import Params, exponents, shrinking_radius
from .shooting import ShootingOptions, ShootingResult, check_monotone, solve

SHOOT_PRESETS: tuple = ((2.0, 0.5, 2.0, 1), (1.2, 0.5, 6.0, 1), (1.5, 0.5, 4.0, 3))
CRITICAL_PRESET: tuple = (1.3, 0.7, 8.0, 1)
PROFILE_PRESETS: tuple = SHOOT_PRESETS + (CRITICAL_PRESET,)


@dataclass
class CriterionResult:
    """Verdict of one criterion with the measured quantities behind it."""

    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    elapsed: float = 0.0
    note: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        summary = self.note or ", ".join(f"{k}={_short(v)}" for k, v in list(self.measured.items())[:4])
        return f"[{verdict}] criterion {self.number:2d} {self.name}: {summary}"

    def as_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": bool(self.passed),
                "measured": _jsonable(self.measured), "elapsed": self.elapsed, "note": self.note}


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _key(params: Params) -> str:
    return f"m={params.m:g},q={params.q:g},sigma={params.sigma:g},N={params.N}"


@dataclass
class AcceptanceContext:
    """Shared state of one acceptance run.

    ``params`` is the parameter set used by the PDE criteria (8–13); the
    profile criteria always cover the fixed presets plus ``params``.
    """

    params: Params = field(default_factory=lambda: Params(2.0, 0.5, 2.0, 1))
    seed: int = 12345
    shooting: ShootingOptions = field(default_factory=ShootingOptions)
    fast: bool = False
    _shots: dict = field(default_factory=dict, repr=False)

    def shoot(self, params: Params) -> ShootingResult:
        k = _key(params)
        if k not in self._shots:
            self._shots[k] = solve(params, exponents(params), self.shooting)
        return self._shots[k]

    def profile_presets(self) -> list[Params]:
        out = [Params(*p) for p in PROFILE_PRESETS]
        if all(_key(p) != _key(self.params) for p in out):
            out.append(self.params)
        return out

    def self_similar(self) -> tuple[pde.SelfSimilarProfile, ShootingResult]:
        res = self.shoot(self.params)
        return pde.SelfSimilarProfile.from_solution(res.profile, res.xi0_star), res


def _timed(number: int, name: str):
    def deco(fn: Callable[[AcceptanceContext], CriterionResult]):
        def wrapper(ctx: AcceptanceContext) -> CriterionResult:
            t0 = time.perf_counter()
            res = fn(ctx)
            res.number, res.name = number, name
            res.elapsed = time.perf_counter() - t0
            return res
        wrapper.number, wrapper.criterion_name = number, name
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper
    return deco


# ---------------------------------------------------------------------------
# Profile criteria
# ---------------------------------------------------------------------------


@_timed(1, "shooting convergence")
def criterion_01(ctx: AcceptanceContext) -> CriterionResult:
    """Bracket width, monotone iteration log, final residual, runtime."""
    measured, ok = {}, True
    for pr in SHOOT_PRESETS:
        p = Params(*pr)
        res = ctx.shoot(p)
        try:
            check_monotone(res.iterations)
            monotone = True
        except NonMonotoneClassification:
            monotone = False
        res_rel = res.residual / res.a_star**p.m
        entry = {"a_star": res.a_star, "relative_width": res.relative_width, "monotone": monotone,
                 "residual_rel": res_rel, "elapsed": res.elapsed}
        entry["ok"] = (res.relative_width <= 1e-10 and monotone and res_rel <= 1e-6
                       and res.elapsed <= 60.0)
        ok &= entry["ok"]
        measured[_key(p)] = entry
    worst = max(v["relative_width"] for v in measured.values())
    slow = max(v["elapsed"] for v in measured.values())
    return CriterionResult(1, "", ok, measured,
                           note=f"worst width {worst:.2e}, slowest {slow:.1f} s")


def _fit(ctx: AcceptanceContext, p: Params):
    res = ctx.shoot(p)
    e = exponents(p)
    return res, e, fit_interface(res.profile, e, tail_window(res.profile, 3.0))


@_timed(2, "interface exponent")
def criterion_02(ctx: AcceptanceContext) -> CriterionResult:
    """Fitted tail exponent within 2 % of the regime law."""
    measured, ok = {}, True
    for p in ctx.profile_presets():
        _, _, fit = _fit(ctx, p)
        err = fit.exponent_rel_error
        measured[_key(p)] = {"fit": fit.exponent_fit, "theory": fit.exponent_theory,
                             "rel_error": err, "window_f": list(tail_window(ctx.shoot(p).profile, 3.0))}
        ok &= err <= 0.02
    worst = max(v["rel_error"] for v in measured.values())
    return CriterionResult(2, "", ok, measured, note=f"worst relative error {worst:.2e} (tol 2e-2)")


@_timed(3, "interface amplitude")
def criterion_03(ctx: AcceptanceContext) -> CriterionResult:
    """Amplitude within 5 % (10 % with the critical-case correction)."""
    measured, ok = {}, True
    for p in ctx.profile_presets():
        _, _, fit = _fit(ctx, p)
        tol = 0.10 if p.regime == "critical" else 0.05
        err = fit.amplitude_rel_error
        measured[_key(p)] = {"fit": fit.amplitude_fit, "theory": fit.amplitude_theory,
                             "rel_error": err, "tol": tol, "regime": p.regime}
        ok &= err <= tol
    worst = max(v["rel_error"] for v in measured.values())
    return CriterionResult(3, "", ok, measured, note=f"worst relative error {worst:.2e}")


@_timed(4, "phase-space limits")
def criterion_04(ctx: AcceptanceContext) -> CriterionResult:
    """Final-decade mean of Y against its limit, and the sign invariants."""
    measured, ok = {}, True
    for p in ctx.profile_presets():
        res = ctx.shoot(p)
        e = exponents(p)
        ph = phase_transform(res.profile, e, xi0=res.xi0_star)
        win = ph.final_window(res.xi0_star)
        y = ph.Y[win]
        entry = {"variant": ph.variant.value, "n_final": int(win.sum()),
                 "sign_violations": ph.sign_violations(), "y_star": ph.y_star_theory}
        if ph.variant is PhaseVariant.LOW:
            entry["y_mean"] = float(y.mean())
            entry["rel_error"] = abs(entry["y_mean"] - ph.y_star_theory) / abs(ph.y_star_theory)
            good = entry["rel_error"] <= 0.02
        else:
            entry["y_max_abs"] = float(np.max(np.abs(y)))
            good = entry["y_max_abs"] <= 0.01
        entry["ok"] = bool(good and entry["sign_violations"] == 0 and entry["n_final"] > 0)
        ok &= entry["ok"]
        measured[_key(p)] = entry
    return CriterionResult(4, "", ok, measured,
                           note=", ".join(f"{k.split(',')[0]}..:{'ok' if v['ok'] else 'bad'}"
                                          for k, v in measured.items()))


@_timed(5, "series consistency")
def criterion_05(ctx: AcceptanceContext) -> CriterionResult:
    """Series truncation order on a dyadic refinement; PME comparison ratio."""
    measured, ok = {}, True
    for p in ctx.profile_presets():
        e = exponents(p)
        s = verify.series_consistency(p, e)
        pm = verify.pme_comparison(p, e, ctx.shoot(p).a_star)
        measured[_key(p)] = {"order_fit": s.order_fit, "order_predicted": s.order_predicted,
                             "order_lower_bound": s.order_lower_bound, "series_ok": s.ok,
                             "pme_ratio_tail": pm.ratio[-3:].tolist(), "pme_ok": pm.ok}
        ok &= s.ok and pm.ok
    return CriterionResult(5, "", ok, measured,
                           note="orders " + ", ".join(f"{v['order_fit']:.3f}/{v['order_predicted']:g}"
                                                      for v in measured.values()))


@_timed(6, "profile ordering")
def criterion_06(ctx: AcceptanceContext) -> CriterionResult:
    """50 random ordered pairs per preset keep strict ordering."""
    measured, total = {}, 0
    rng = np.random.default_rng(ctx.seed)
    for p in ctx.profile_presets():
        e = exponents(p)
        chk = verify.ordering_check(p, e, ctx.shoot(p).a_star, 50, rng)
        measured[_key(p)] = chk.as_dict()
        total += len(chk.violations)
    return CriterionResult(6, "", total == 0, measured, note=f"{total} violations")


@_timed(7, "interface bounds")
def criterion_07(ctx: AcceptanceContext) -> CriterionResult:
    """The three a-priori interface inequalities at every tail sample."""
    measured, total = {}, 0
    for p in ctx.profile_presets():
        res = ctx.shoot(p)
        rep = interface_bounds_check(res.profile, exponents(p), res.xi0_star, rtol=1e-10)
        measured[_key(p)] = rep.as_dict()
        total += sum(rep.violations.values())
    return CriterionResult(7, "", total == 0, measured, note=f"{total} violations")


# ---------------------------------------------------------------------------
# PDE criteria
# ---------------------------------------------------------------------------


@_timed(8, "PDE sup-norm and comparison")
def criterion_08(ctx: AcceptanceContext, n_runs: int = 20) -> CriterionResult:
    """Randomised ordered pairs: sup norm non-increasing, ordering preserved.

    Both checks allow the same 1e-12 slack for the nonlinear solver tolerance.
    """
    p = ctx.params
    e = exponents(p)
    rng = np.random.default_rng(ctx.seed + 8)
    grid = pde.RadialGrid(3.0, 192)
    sup_fail = order_fail = 0
    worst_sup = worst_order = -math.inf
    for _ in range(n_runs):
        lo = pde.random_datum(rng, grid)
        hi = lo + pde.random_datum(rng, grid, amplitude=0.5)
        t_end = float(rng.uniform(0.2, 1.0))
        logs = np.linspace(0.0, t_end, 11)[1:]
        dt = pde.DtPolicy(grid.dr * float(rng.uniform(0.5, 2.0)))
        runs = [pde.run(pde.init_state(grid, u, p), t_end, dt, p, e, log_times=logs, keep_snapshots=True)
                for u in (lo, hi)]
        for tr in runs:
            inc = float(np.max(np.diff(tr["sup_norm"])))
            worst_sup = max(worst_sup, inc)
            sup_fail += int(inc > 1e-12)
        gap = max(float(np.max(a.u - b.u)) for a, b in zip(runs[0].snapshots, runs[1].snapshots))
        worst_order = max(worst_order, gap)
        order_fail += int(gap > 1e-12)
    ok = sup_fail == 0 and order_fail == 0
    return CriterionResult(8, "", ok, {
        "runs": n_runs, "sup_increase_max": worst_sup, "sup_failures": sup_fail,
        "order_gap_max": worst_order, "order_failures": order_fail},
        note=f"max sup increase {worst_sup:.2e}, max order gap {worst_order:.2e}")


@_timed(9, "instantaneous shrinking")
def criterion_09(ctx: AcceptanceContext) -> CriterionResult:
    """Constant datum: support radius at t = 0.1, 1 below 2 R(t) + 2 Δr."""
    p = ctx.params
    e = exponents(p)
    c = 1.0
    grid = pde.RadialGrid(4.0 * shrinking_radius(p, c, 0.1), 4096)
    state = pde.init_state(grid, pde.constant(c), p)
    eps = 1e-10 * c
    t0 = time.perf_counter()
    tr = pde.run(state, 1.0, pde.DtPolicy(grid.dr), p, e,
                 {"support": lambda s: pde.support_radius(s, eps)}, [0.1, 1.0])
    runtime = time.perf_counter() - t0
    measured, ok = {"runtime": runtime, "dr": grid.dr}, runtime <= 120.0
    for t, r in zip(tr.times[1:], tr["support"][1:]):
        bound = 2.0 * shrinking_radius(p, c, t) + 2.0 * grid.dr
        measured[f"t={t:g}"] = {"support": r, "bound": bound}
        ok &= r <= bound
    return CriterionResult(9, "", ok, measured,
                           note=", ".join(f"{k}: {v['support']:.4g} <= {v['bound']:.4g}"
                                          for k, v in measured.items() if k.startswith("t=")))


@_timed(10, "supersolution residual")
def criterion_10(ctx: AcceptanceContext) -> CriterionResult:
    """min L W_R >= -1e-6 with the equality choice of A(R), B(R) and R = R(T)."""
    p = ctx.params
    measured, worst = {}, math.inf
    for sup_u0 in (0.5, 1.0, 4.0):
        for T in (0.1, 1.0, 10.0):
            R = shrinking_radius(p, sup_u0, T)
            W = pde.Supersolution.equality_choice(p, R, T)
            v = pde.supersolution_residual(p, sup_u0, R, T, 401, method="exact")
            measured[f"u0={sup_u0:g},T={T:g}"] = {"min_LW": v, "conditions": W.conditions(sup_u0)}
            worst = min(worst, v)
    conds = all(all(v["conditions"].values()) for v in measured.values())
    return CriterionResult(10, "", worst >= -1e-6 and conds, measured,
                           note=f"min L W = {worst:.3g} (tol -1e-6), conditions hold: {conds}")


@_timed(11, "non-extinction and convergence")
def criterion_11(ctx: AcceptanceContext) -> CriterionResult:
    """Bump datum: origin above the lower barrier; rescaled error decays below 0.05."""
    p = ctx.params
    e = exponents(p)
    table, _ = ctx.self_similar()
    delta, r0 = 1.0, 1.0
    grid = pde.RadialGrid(2.0 * r0, 8000)
    state = pde.init_state(grid, pde.bump(delta, r0), p)
    tau_inf = pde.lower_shift(table, e, delta, r0)
    logs = [0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0]
    obs = {"origin": pde.origin_value,
           "error": lambda s: pde.rescaled_error(s, e, table) if s.t > 0 else math.nan}
    tr = pde.run(state, 100.0, pde.DtPolicy(grid.dr / 10.0, kappa=1e-3), p, e, obs, logs)
    barrier = (tau_inf + tr.times) ** (-e.alpha) * table.a
    margin = float(np.min(tr["origin"] - (barrier - 1e-8)))
    err = dict(zip(tr.times.tolist(), tr["error"].tolist()))
    e10, e100 = err[10.0], err[100.0]
    ok_barrier = margin >= 0.0
    ok = ok_barrier and e100 < e10 and e100 < 0.05
    measured = {"tau_inf": tau_inf, "barrier_margin_min": margin, "error_t10": e10,
                "error_t100": e100, "origin_t100_rescaled": 100.0**e.alpha * tr["origin"][-1],
                "a_star": table.a, "times": tr.times, "origin": tr["origin"], "error": tr["error"]}
    return CriterionResult(11, "", ok, measured,
                           note=f"barrier ok: {ok_barrier}, error(10)={e10:.4g}, "
                                f"error(100)={e100:.4g} (need < 0.05)")


@_timed(12, "stationary solution")
def criterion_12(ctx: AcceptanceContext) -> CriterionResult:
    """Residual order 2 ± 0.3 under dyadic refinement; capped datum keeps u(t,0) = 0."""
    p = ctx.params
    e = exponents(p)
    ns = np.array([64, 128, 256, 512, 1024])
    res = np.array([pde.stationary_residual(p, e, pde.RadialGrid(2.0, int(n))) for n in ns])
    order = float(-np.polyfit(np.log(ns), np.log(res), 1)[0])
    cap = 0.1
    r_cap = (cap / e.a_stat) ** (1.0 / e.stat_power)
    grid = pde.RadialGrid(1.5 * r_cap, 8192)
    state = pde.init_state(grid, pde.capped_stationary(e, cap), p)
    tr = pde.run(state, 10.0, pde.DtPolicy(0.01), p, e, {"origin": pde.origin_value},
                 np.linspace(0.0, 10.0, 21)[1:])
    u0_max = float(np.max(tr["origin"]))
    ok = abs(order - 2.0) <= 0.3 and u0_max <= 1e-12
    return CriterionResult(12, "", ok, {"residuals": res, "order": order, "origin_max": u0_max,
                                        "cap": cap, "dr": grid.dr},
                           note=f"order {order:.3f}, max u(t,0) = {u0_max:.2e}")


@_timed(13, "self-similar invariance")
def criterion_13(ctx: AcceptanceContext) -> CriterionResult:
    """From the t = 1 snapshot, rescaled error <= 5 (Δr + dt) on [1, 10]."""
    p = ctx.params
    e = exponents(p)
    table, _ = ctx.self_similar()
    grid = pde.RadialGrid(1.25 * table.xi0, 2048)
    dt = grid.dr / 400.0
    state = pde.init_state(grid, pde.self_similar_datum(table, e, 1.0), p, t0=1.0)
    tr = pde.run(state, 10.0, pde.DtPolicy(dt), p, e,
                 {"error": lambda s: pde.rescaled_error(s, e, table)}, np.linspace(1.0, 10.0, 19)[1:])
    bound = 5.0 * (grid.dr + dt)
    worst = float(np.max(tr["error"]))
    return CriterionResult(13, "", worst <= bound, {"max_error": worst, "bound": bound, "dr": grid.dr,
                                                    "dt": dt, "times": tr.times, "error": tr["error"]},
                           note=f"max error {worst:.4g} <= bound {bound:.4g}")


CRITERIA = (criterion_01, criterion_02, criterion_03, criterion_04, criterion_05, criterion_06,
            criterion_07, criterion_08, criterion_09, criterion_10, criterion_11, criterion_12,
            criterion_13)


def run_all(ctx: Optional[AcceptanceContext] = None, numbers=None,
            progress: Optional[Callable[[CriterionResult], None]] = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default) in order."""
    ctx = ctx or AcceptanceContext()
    out = []
    for fn in CRITERIA:
        if numbers is not None and fn.number not in numbers:
            continue
        res = fn(ctx)
        if progress is not None:
            progress(res)
        out.append(res)
    return out
