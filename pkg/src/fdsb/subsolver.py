"""Projected-subgradient maximizer for the concave composite bounds.

The feasible set is a product of per-transmitter power balls
intersected with the clustering zero-pattern, so projection is cheap
and exact; the composite bounds are concave but non-smooth (per-user
minima), which a subgradient method handles without reformulation.

Evaluation callables return ``(value, grad_w, grad_v)`` and may signal
a domain violation with value -inf (the SINR-convexified family is
only locally valid); steps landing there are shrunk until finite.
"""

import math
from dataclasses import dataclass

import numpy as np

from .rates import BeamformerSet, Clustering, PowerBudgets, project_feasible

STEP_UNDERFLOW = 1e-18
_WINDOW = 50


class StepUnderflowError(RuntimeError):
    """Raised when sentinel backtracking shrinks a step below 1e-18."""


@dataclass
class SubsolverConfig:
    max_inner_iters: int = 500
    tol_inner: float = 1e-5
    step_rule: str = "diminishing"        # or "backtracking"
    backtrack_shrink: float = 0.5
    best_iterate_tracking: bool = True

    def __post_init__(self):
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")
        if self.tol_inner <= 0:
            raise ValueError("tol_inner must be positive")
        if self.step_rule not in ("diminishing", "backtracking"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not 0.0 < self.backtrack_shrink < 1.0:
            raise ValueError("backtrack_shrink must lie in (0, 1)")


def subgradient_step(x: BeamformerSet, g, step, cl: Clustering,
                     budgets: PowerBudgets) -> BeamformerSet:
    """One projected ascent step x -> P(x + step * g)."""
    gw, gv = g
    cand = BeamformerSet(x.w + step * gw, x.v + step * gv)
    return project_feasible(cand, cl, budgets)


def _sentinel_step(surrogate_eval, x, d, step, cl, budgets, shrink):
    """Step with backtracking past -inf regions; returns the first
    finite landing point with its value and gradients."""
    while True:
        x2 = subgradient_step(x, d, step, cl, budgets)
        f2, gw2, gv2 = surrogate_eval(x2.w, x2.v)
        if f2 != -np.inf:
            return x2, f2, gw2, gv2
        step *= shrink
        if step < STEP_UNDERFLOW:
            raise StepUnderflowError(
                "step shrank below 1e-18 while escaping the bound's domain")


def _gnorm(gw, gv):
    return math.sqrt(float((np.abs(gw) ** 2).sum())
                     + float((np.abs(gv) ** 2).sum()))


def solve_subproblem(surrogate_eval, x_init: BeamformerSet, cl: Clustering,
                     budgets: PowerBudgets,
                     cfg: SubsolverConfig) -> BeamformerSet:
    """Maximize a concave composite bound over the feasible set.

    Ascent is guaranteed through best-iterate tracking: the returned
    point's value is never below the value at x_init (up to 1e-12).
    Stops when the best value gains less than tol_inner (relative)
    over a trailing window, when no improving step exists
    (backtracking rule), or at the iteration cap.

    With the diminishing rule the stagnation window only arms once the
    step has decayed to within 2x of its terminal size; judging
    improvement while steps are still large conflates schedule scale
    with stagnation (early steps can overshoot a sharply curved ridge
    that the late, smaller steps climb without trouble).
    """
    x = project_feasible(x_init, cl, budgets)
    val, gw, gv = surrogate_eval(x.w, x.v)
    if val == -np.inf:
        raise RuntimeError("surrogate is -inf at the starting point; "
                           "expected tightness at the expansion point")
    best_x, best_f = x, val
    a = 0.1 * math.sqrt(budgets.p_mbs)
    b = 10.0
    bt_step = a / b
    hist = [best_f]
    # schedule index for the diminishing rule; advances only on steps
    # that fail to push the best value, so the step size persists while
    # the iterate is still covering distance (a fixed a/(b+i) schedule
    # caps the total travel at a*log(max_iters), which silently turns
    # one far-from-optimum subproblem into many outer iterations)
    i_sched = 0

    for i in range(cfg.max_inner_iters):
        gn = _gnorm(gw, gv)
        if gn == 0.0:
            break
        d = (gw / gn, gv / gn)

        if cfg.step_rule == "diminishing":
            try:
                x, val, gw, gv = _sentinel_step(
                    surrogate_eval, x, d, a / (b + i_sched), cl, budgets,
                    cfg.backtrack_shrink)
            except StepUnderflowError:
                break
            if val <= best_f:
                i_sched += 1
        else:
            step = bt_step
            accepted = False
            while step >= STEP_UNDERFLOW:
                x2 = subgradient_step(x, d, step, cl, budgets)
                f2, gw2, gv2 = surrogate_eval(x2.w, x2.v)
                if f2 != -np.inf and f2 > val:
                    x, val, gw, gv = x2, f2, gw2, gv2
                    bt_step = min(step / cfg.backtrack_shrink, a)
                    accepted = True
                    break
                step *= cfg.backtrack_shrink
            if not accepted:
                break

        if cfg.best_iterate_tracking:
            if val > best_f:
                best_x, best_f = x, val
        else:
            best_x, best_f = x, val

        hist.append(best_f)
        armed = (cfg.step_rule != "diminishing"
                 or b + i_sched >= 0.5 * (b + cfg.max_inner_iters))
        if armed and len(hist) > _WINDOW:
            ref = hist[-_WINDOW - 1]
            if best_f - ref <= cfg.tol_inner * max(abs(ref), 1e-12):
                break

    return best_x


def gradient_mapping_norm(surrogate_eval, x: BeamformerSet, cl: Clustering,
                          budgets: PowerBudgets, t=1.0):
    """Stationarity witness ||x - P(x + t*g)|| / t (zero exactly at
    constrained maximizers, for any t > 0)."""
    _, gw, gv = surrogate_eval(x.w, x.v)
    x2 = subgradient_step(x, (gw, gv), t, cl, budgets)
    diff = math.sqrt(float((np.abs(x.w - x2.w) ** 2).sum())
                     + float((np.abs(x.v - x2.v) ** 2).sum()))
    return diff / t
