"""Shooting on the initial value ``a = f(0)`` for the compactly supported profile.

Small ``a`` give trajectories that hit zero with a negative slope (class A),
large ``a`` give trajectories that turn upward at a positive minimum (class C).
The profile with an interface sits at the unique boundary between the two, so
it is located by bisection on the classification.

Double precision in ``a`` only resolves the touchdown down to roughly
``F ~ 1e-7 a^m``: the A/C split is extremely sensitive in the tail. The tail is
therefore refined by *re-anchoring*: at a point where the bracketing A and C
trajectories still agree to ``anchor_rel``, the shooting parameter becomes the
position on the segment between their two states, and bisection is repeated
from there. Each stage measures the state relative to its own (small) size and
so resolves the touchdown several decades deeper. The stitched trajectory is a
solution of the same equation, continuous up to the restart rounding.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import BracketNotFound, NonMonotoneClassification
from .params import Exponents, Params
from .profile import (
    IntegrationOptions,
    ProfileClass,
    ProfileSolution,
    Termination,
    integrate_backward,
    integrate_from_state,
    integrate_profile,
)

log = logging.getLogger(__name__)

SHOOTING_INTEGRATION = IntegrationOptions(rtol=1e-12, atol_factor=1e-18, floor_factor=1e-14)


@dataclass(frozen=True)
class ShootingOptions:
    """Controls for :func:`find_bracket` and :func:`solve`.

    Attributes
    ----------
    a_seed : float
        Starting point of the geometric bracket search.
    bracket_tol : float
        Bisection stops once ``a_hi - a_lo <= bracket_tol * a_mid``.
    max_doublings : int
        Cap on the number of x2 / /2 moves of the bracket search. Some
        admissible parameters put ``a*`` near ``1e60``, hence the large default.
    max_retries : int
        Tolerance tightenings (x10 each) tried on an Undecided trajectory before
        falling back to the sign of the last ``F'``.
    tail_stages : int
        Maximum number of re-anchoring stages (0 disables tail refinement).
    tail_target : float
        Stop refining once the trajectory is resolved down to ``F <= tail_target * a^m``.
    anchor_rel, resolve_rel : float
        Relative A/C disagreement that places the next anchor, and that marks
        the end of the resolved part of the trajectory.
    time_budget : float or None
        Wall-clock seconds after which no new tail stage is started.
    backward_tail : bool
        Complete the tail with a backward trajectory from the interface,
        matched to the forward profile.
    seed_factor : float
        Seed ``F = seed_factor * a^m`` of the backward trajectory.
    backward_rtol : float
        Relative tolerance of the backward integration.
    """

    a_seed: float = 1.0
    bracket_tol: float = 1e-10
    max_doublings: int = 400
    max_retries: int = 2
    integration: IntegrationOptions = SHOOTING_INTEGRATION
    tail_stages: int = 2
    tail_target: float = 1e-24
    anchor_rel: float = 1e-8
    resolve_rel: float = 1e-3
    time_budget: Optional[float] = 30.0
    backward_tail: bool = True
    seed_factor: float = 1e-30
    backward_rtol: float = 1e-10


@dataclass
class ShootingResult:
    """Outcome of :func:`solve`.

    ``iterations`` logs every classified ``a`` (bracket search and bisection)
    in evaluation order; ``bracket_history`` the bracket after each bisection
    step. ``profile`` is the trajectory at ``a_star`` continued through the
    re-anchored tail stages and cut at the last reliable sample; ``residual`` is
    ``max(F, |F'|)`` there.
    """

    a_star: float
    bracket: tuple[float, float]
    iterations: list[tuple[float, str]]
    bracket_history: list[tuple[float, float]]
    profile: ProfileSolution
    xi0_star: float
    residual: float
    undecided_events: list[dict] = field(default_factory=list)
    tail_log: list[dict] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def relative_width(self) -> float:
        lo, hi = self.bracket
        return (hi - lo) / self.a_star

    def as_dict(self) -> dict:
        return {
            "a_star": self.a_star,
            "bracket": list(self.bracket),
            "relative_width": self.relative_width,
            "xi0_star": self.xi0_star,
            "residual": self.residual,
            "iterations": [[a, c] for a, c in self.iterations],
            "bracket_history": [list(b) for b in self.bracket_history],
            "undecided_events": self.undecided_events,
            "tail_log": self.tail_log,
            "elapsed": self.elapsed,
        }


def resolve_class(
    run: Callable[[IntegrationOptions], ProfileSolution],
    options: IntegrationOptions,
    max_retries: int,
    events: list[dict] | None = None,
    label: float | None = None,
) -> tuple[ProfileClass, ProfileSolution]:
    """Classify with the Undecided policy: tighten x10 and retry, then sign of last F'."""
    sol = run(options)
    if sol.cls is not ProfileClass.UNDECIDED:
        return sol.cls, sol
    opts = options
    for attempt in range(1, max_retries + 1):
        opts = opts.tightened(10.0)
        sol = run(opts)
        if sol.cls is not ProfileClass.UNDECIDED:
            if events is not None:
                events.append({"a": label, "rule": "tightened", "retries": attempt,
                               "class": sol.cls.value})
            return sol.cls, sol
    cls = ProfileClass.A if sol.dF[-1] < 0 else ProfileClass.C
    if events is not None:
        events.append({
            "a": label, "rule": "sign_of_last_dF", "class": cls.value,
            "termination": sol.termination.value,
        })
    return cls, sol


def _classify_a(params, exps, a, opts: ShootingOptions, events):
    return resolve_class(
        lambda o: integrate_profile(params, exps, a, o), opts.integration, opts.max_retries, events, a
    )


def find_bracket(
    params: Params,
    exps: Exponents,
    a_seed: float = 1.0,
    options: ShootingOptions | None = None,
    log_out: list | None = None,
    events: list | None = None,
) -> tuple[float, float]:
    """Geometric search (x2 up, /2 down from ``a_seed``) for an A/C pair.

    Returns ``(a_lo, a_hi)`` with ``a_lo`` of class A and ``a_hi`` of class C,
    the two being adjacent points of the search (ratio 2).
    """
    opts = options or ShootingOptions()
    if not (a_seed > 0 and math.isfinite(a_seed)):
        raise BracketNotFound(f"a_seed must be positive, got {a_seed!r}")
    log_out = log_out if log_out is not None else []
    cls, _ = _classify_a(params, exps, a_seed, opts, events)
    log_out.append((a_seed, cls.value))
    a = a_seed
    factor = 2.0 if cls is ProfileClass.A else 0.5
    for _ in range(opts.max_doublings):
        nxt = a * factor
        if not (0 < nxt < math.inf):
            break
        c2, _ = _classify_a(params, exps, nxt, opts, events)
        log_out.append((nxt, c2.value))
        if c2 is not cls:
            return (a, nxt) if cls is ProfileClass.A else (nxt, a)
        a = nxt
    raise BracketNotFound(
        f"no A/C pair within {opts.max_doublings} doublings of a_seed={a_seed} "
        f"(every trajectory classified {cls.value})"
    )


def check_monotone(iterations: list[tuple[float, str]]) -> None:
    """Raise :class:`NonMonotoneClassification` if some C lies at or below some A."""
    a_vals = [a for a, c in iterations if c == ProfileClass.A.value]
    c_vals = [a for a, c in iterations if c == ProfileClass.C.value]
    if a_vals and c_vals and max(a_vals) >= min(c_vals):
        raise NonMonotoneClassification(
            f"class C at a={min(c_vals)!r} is not above class A at a={max(a_vals)!r}"
        )


class PiecewiseDense:
    """Callable ``(F, F')`` interpolant stitched from consecutive dense outputs."""

    def __init__(self, breaks: list[float], pieces: list[Callable]):
        self.breaks = np.asarray(breaks, dtype=float)
        self.pieces = pieces

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        scalar = x_arr.ndim == 0
        xs = np.atleast_1d(x_arr)
        idx = np.clip(np.searchsorted(self.breaks, xs, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty((2, xs.size))
        for k in np.unique(idx):
            sel = idx == k
            out[:, sel] = np.asarray(self.pieces[k](xs[sel])).reshape(2, -1)
        return out[:, 0] if scalar else out


def _comparison_grid(lo: ProfileSolution, hi: ProfileSolution, x_start: float) -> np.ndarray:
    x_end = min(lo.xi[-1], hi.xi[-1])
    pts = np.union1d(lo.xi, hi.xi)
    pts = pts[(pts >= x_start) & (pts <= x_end)]
    pts = np.union1d(pts, [x_start, x_end])
    mids = 0.5 * (pts[1:] + pts[:-1])
    quarter = 0.5 * (pts[1:] + mids)
    return np.union1d(np.union1d(pts, mids), quarter)


def _disagreement(lo: ProfileSolution, hi: ProfileSolution, x_start: float):
    xs = _comparison_grid(lo, hi, x_start)
    Fl = lo.dense(xs)[0]
    Fh = hi.dense(xs)[0]
    rel = np.abs(Fh - Fl) / np.maximum(np.abs(Fh), np.finfo(float).tiny)
    return xs, Fl, rel


def _resolved_end(lo, hi, x_start, resolve_rel) -> tuple[float, float]:
    xs, Fl, rel = _disagreement(lo, hi, x_start)
    bad = np.flatnonzero((rel > resolve_rel) | (Fl <= 0))
    j = bad[0] - 1 if bad.size else xs.size - 1
    j = max(j, 0)
    return float(xs[j]), float(Fl[j])


@dataclass
class _Tail:
    """Running state of the tail refinement: stitched pieces plus the current A/C pair."""

    lo: ProfileSolution
    hi: ProfileSolution
    breaks: list
    pieces: list
    x_start: float
    x_end: float
    F_end: float

    def anchor(self, anchor_rel: float) -> float:
        xs, _, rel = _disagreement(self.lo, self.hi, self.x_start)
        cand = np.flatnonzero(rel > anchor_rel)
        j = max(cand[0] - 1, 0) if cand.size else xs.size - 1
        return float(xs[j])


def refine_tail(
    params: Params,
    exps: Exponents,
    lo: ProfileSolution,
    hi: ProfileSolution,
    options: ShootingOptions | None = None,
    deadline: float | None = None,
) -> tuple[_Tail, list[dict], list[dict]]:
    """Continue the A/C pair ``lo``/``hi`` through re-anchored forward bisection stages.

    Returns the tail state (stitched pieces and the final A/C pair), the
    per-stage log and the Undecided-policy events raised during the stages.
    """
    opts = options or ShootingOptions()
    a = lo.a
    scale = a**params.m
    stage_opts = replace(opts.integration, xi_max=2.0 * max(lo.xi[-1], hi.xi[-1]))
    events: list[dict] = []
    stages: list[dict] = []
    x0 = float(lo.xi[0])
    x_end, F_end = _resolved_end(lo, hi, x0, opts.resolve_rel)
    tail = _Tail(lo, hi, [x0], [], x0, x_end, F_end)

    for stage in range(opts.tail_stages):
        if tail.F_end <= opts.tail_target * scale:
            break
        if deadline is not None and time.perf_counter() > deadline:
            stages.append({"stage": stage, "stopped": "time_budget"})
            break
        xm = tail.anchor(opts.anchor_rel)
        if xm <= tail.x_start:
            stages.append({"stage": stage, "stopped": "anchor_not_advancing"})
            break
        y_lo = np.asarray(tail.lo.dense(xm), dtype=float)
        y_hi = np.asarray(tail.hi.dense(xm), dtype=float)
        v = y_hi - y_lo

        def run_at(delta):
            y = y_lo + delta * v
            return lambda o: integrate_from_state(params, exps, a, xm, y[0], y[1], o)

        d_lo, d_hi = 0.0, 1.0
        c0, s_lo = resolve_class(run_at(0.0), stage_opts, opts.max_retries, events, None)
        c1, s_hi = resolve_class(run_at(1.0), stage_opts, opts.max_retries, events, None)
        if c0 is not ProfileClass.A or c1 is not ProfileClass.C:
            stages.append({"stage": stage, "stopped": "restart_misclassified", "xi_anchor": xm})
            break
        n_bisect = 0
        while True:
            d_mid = 0.5 * (d_lo + d_hi)
            if not d_lo < d_mid < d_hi:
                break
            c, sol = resolve_class(run_at(d_mid), stage_opts, opts.max_retries, events, None)
            n_bisect += 1
            if c is ProfileClass.A:
                d_lo, s_lo = d_mid, sol
            else:
                d_hi, s_hi = d_mid, sol
        new_end, new_F = _resolved_end(s_lo, s_hi, xm, opts.resolve_rel)
        stages.append({
            "stage": stage, "xi_anchor": xm, "F_anchor": float(y_lo[0]),
            "bisections": n_bisect, "xi_resolved": new_end, "F_resolved": new_F,
        })
        if not new_F < tail.F_end:
            stages[-1]["stopped"] = "no_progress"
            break
        tail.pieces.append(tail.lo.dense)
        tail.breaks.append(xm)
        tail.lo, tail.hi, tail.x_start, tail.x_end, tail.F_end = s_lo, s_hi, xm, new_end, new_F
    return tail, stages, events


def match_backward(
    params: Params,
    exps: Exponents,
    forward: Callable,
    xi_match: float,
    xi_guess: float,
    seed_factor: float = 1e-30,
    a: float = 1.0,
    rtol: float = 1e-10,
) -> tuple[ProfileSolution, dict]:
    """Find the seed position whose backward trajectory meets ``forward`` at ``xi_match``.

    ``forward(xi) -> (F, F')`` is the reliable forward profile. The single
    unknown is the seed position ``xi_seed``, fixed by matching ``F``; the
    mismatch in ``F'`` at ``xi_match`` is an independent consistency check and
    is reported as ``dF_rel_mismatch``.
    """
    from scipy.optimize import brentq

    F_m, dF_m = (float(v) for v in forward(xi_match))
    F_seed = seed_factor * a**params.m

    def miss(xi_seed):
        sol = integrate_backward(params, exps, xi_seed, F_seed, xi_match, rtol=rtol, dense=False)
        return sol.F[0] - F_m  # first sample is the end point xi_match

    lo = max(xi_match + 1e-12 * abs(xi_match), xi_guess - 0.5 * (xi_guess - xi_match))
    width = xi_guess - xi_match
    hi = xi_guess + width
    m_lo, m_hi = miss(lo), miss(hi)
    for _ in range(60):
        if m_lo < 0 < m_hi:
            break
        if m_lo >= 0:
            lo = xi_match + 0.5 * (lo - xi_match)
            m_lo = miss(lo)
        if m_hi <= 0:
            width *= 2.0
            hi = xi_guess + width
            m_hi = miss(hi)
    else:
        raise BracketNotFound("could not bracket the backward seed position")
    xi_seed = brentq(miss, lo, hi, xtol=4.0 * np.spacing(hi), rtol=4.0 * np.finfo(float).eps)
    back = integrate_backward(params, exps, xi_seed, F_seed, xi_match, rtol=rtol)
    Fb, dFb = back.dense(xi_match)
    info = {
        "xi_match": xi_match, "xi_seed": xi_seed, "F_seed": F_seed,
        "F_rel_mismatch": float((Fb - F_m) / F_m),
        "dF_rel_mismatch": float((dFb - dF_m) / dF_m),
    }
    return back, info


def _stitch(params, a, breaks, pieces, x_end, meta) -> ProfileSolution:
    dense = PiecewiseDense(breaks, pieces)
    xs = _piece_points(breaks, x_end, pieces)
    F, dF = dense(xs)
    return ProfileSolution(
        a=a, xi=xs, F=F, dF=dF, m=params.m, cls=ProfileClass.UNDECIDED,
        termination=Termination.MAX_XI_REACHED, dense=dense, kind="shooting", meta=meta,
    )


def _piece_points(breaks, x_end, pieces) -> np.ndarray:
    pts = []
    for k, piece in enumerate(pieces):
        left = breaks[k]
        right = breaks[k + 1] if k + 1 < len(breaks) else x_end
        if getattr(piece, "ts", None) is not None:
            ts = np.asarray(piece.ts, dtype=float)
        else:
            ts = np.array([left, right])
        inner = ts[(ts > left) & (ts < right)]
        pts.append(np.concatenate(([left], inner)))
    pts.append([x_end])
    xs = np.unique(np.concatenate(pts))
    return xs[xs <= x_end]


def solve(
    params: Params,
    exps: Exponents,
    options: ShootingOptions | None = None,
) -> ShootingResult:
    """Locate ``a*`` by bisection and return the converged profile.

    After the bisection on ``a`` the tail is refined by ``options.tail_stages``
    re-anchored forward stages and, if ``options.backward_tail`` is set,
    completed by a backward trajectory from the interface matched to the
    forward profile (see :func:`match_backward`).

    Raises
    ------
    BracketNotFound
        If the bracket search finds no A/C pair.
    NonMonotoneClassification
        If the iteration log contains a C-classified value below an A-classified one.
    """
    from .asymptotics import estimate_xi0

    opts = options or ShootingOptions()
    t0 = time.perf_counter()
    deadline = t0 + opts.time_budget if opts.time_budget is not None else None
    iterations: list[tuple[float, str]] = []
    events: list[dict] = []
    a_lo, a_hi = find_bracket(params, exps, opts.a_seed, opts, iterations, events)
    check_monotone(iterations)
    history = [(a_lo, a_hi)]
    _, sol_lo = _classify_a(params, exps, a_lo, opts, None)
    _, sol_hi = _classify_a(params, exps, a_hi, opts, None)
    while a_hi - a_lo > opts.bracket_tol * 0.5 * (a_lo + a_hi):
        a_mid = 0.5 * (a_lo + a_hi)
        if not a_lo < a_mid < a_hi:
            break
        cls, sol = _classify_a(params, exps, a_mid, opts, events)
        iterations.append((a_mid, cls.value))
        if cls is ProfileClass.A:
            a_lo, sol_lo = a_mid, sol
        else:
            a_hi, sol_hi = a_mid, sol
        history.append((a_lo, a_hi))
    check_monotone(iterations)
    a_star = 0.5 * (a_lo + a_hi)
    at_star = integrate_profile(params, exps, a_star, opts.integration.tightened(10.0))

    tail, tail_log, tail_events = refine_tail(params, exps, sol_lo, sol_hi, opts, deadline)
    events.extend(tail_events)
    meta = {
        "a_lo": a_lo, "a_hi": a_hi,
        "class_at_a_star": at_star.cls.value,
        "termination_at_a_star": at_star.termination.value,
        "forward_stages": len(tail.breaks) - 1,
        "forward_xi_resolved": tail.x_end,
        "forward_F_resolved": tail.F_end,
    }
    breaks, pieces = list(tail.breaks), list(tail.pieces)
    if opts.backward_tail:
        xi_match = tail.anchor(opts.anchor_rel)
        if xi_match <= tail.x_start:
            xi_match = 0.5 * (tail.x_start + tail.x_end)
        F_e, dF_e = tail.lo.dense(tail.x_end)
        p_th = exps.interface_exponent()
        s_guess = -p_th * params.m * F_e / dF_e if dF_e < 0 else tail.x_end - xi_match
        xi_guess = tail.x_end + max(s_guess, 1e-12 * abs(tail.x_end))
        forward = PiecewiseDense(breaks + [tail.x_start], pieces + [tail.lo.dense])
        back, info = match_backward(
            params, exps, forward, xi_match, xi_guess, opts.seed_factor, a_star, opts.backward_rtol
        )
        pieces.append(tail.lo.dense)
        # the forward part ends at xi_match, the backward trajectory takes over
        breaks, pieces = _truncate(breaks, pieces, xi_match)
        breaks.append(xi_match)
        pieces.append(back.dense)
        x_end = float(back.xi[-1])
        meta.update({"backward": info, "resolved_by": "backward"})
    else:
        pieces.append(tail.lo.dense)
        x_end = tail.x_end
        meta["resolved_by"] = "forward"
    profile = _stitch(params, a_star, breaks, pieces, x_end, meta)
    profile.meta["F_resolved"] = float(profile.F[-1])
    profile.meta["xi_resolved"] = x_end
    xi0_star = estimate_xi0(profile, exps)
    profile.xi0 = xi0_star
    residual = float(max(abs(profile.F[-1]), abs(profile.dF[-1])))
    return ShootingResult(
        a_star=a_star, bracket=(a_lo, a_hi), iterations=iterations,
        bracket_history=history, profile=profile, xi0_star=xi0_star,
        residual=residual, undecided_events=events, tail_log=tail_log,
        elapsed=time.perf_counter() - t0,
    )


def _truncate(breaks: list, pieces: list, x_cut: float) -> tuple[list, list]:
    """Keep the pieces that start before ``x_cut``."""
    keep = [k for k, b in enumerate(breaks) if b < x_cut]
    return [breaks[k] for k in keep], [pieces[k] for k in keep]
