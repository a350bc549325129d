"""Scalar thresholding with a concave surrogate penalty.

Solves the one-dimensional problem

    T_g(y, lam) = argmin_{x >= 0}  f_y(x) = 0.5 * (y - x)**2 + lam * g(x)

for a concave surrogate g.  The objective is concave before and convex after
the breakpoint a0 (the largest x with g''(x) = -1/lam), so the global
minimizer is either 0, the breakpoint itself, or the unique stationary point
beyond it.  That stationary point is the fixed point of the shift map
``J1(x) = y - lam * g'(x)``, which is a contraction past the breakpoint; it
is located by an Aitken-accelerated fixed-point iteration and the three
candidates are compared directly.

With the identity surrogate this reduces exactly to soft thresholding
``max(y - lam, 0)``, which the tests use as a closed-form reference.

An independent brute-force oracle (dense grid plus trisection refinement)
lives here too; the solver never calls it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import IterationLimitError, NumericalError
from .surrogates import SurrogateKind, SurrogateSpec, eval_g, grad_g

__all__ = [
    "ProxProblem",
    "ProxSolution",
    "Branch",
    "solve_threshold",
    "breakpoint_a0",
    "oracle_threshold",
    "prox_objective",
    "apply_threshold",
]

# stop as soon as the Aitken residual is this small, even if tol is smaller,
# the denominator of the accelerated step is no longer trustworthy
_AITKEN_GUARD = 1e-15

DEFAULT_MAX_ITER = 10_000


class Branch(str, Enum):
    FIXED_POINT = "fixed_point"
    BREAKPOINT = "breakpoint"
    ZERO = "zero"


@dataclass(frozen=True)
class ProxProblem:
    """One thresholding instance: input magnitude y, weight lam, surrogate g."""

    y: float
    lam: float
    g: SurrogateSpec
    tol: float = 1e-10

    def __post_init__(self):
        if not (math.isfinite(self.y) and self.y >= 0.0):
            raise ValueError(f"y must be finite and >= 0, got {self.y}")
        if not (math.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError(f"lam must be finite and > 0, got {self.lam}")
        if not (math.isfinite(self.tol) and self.tol > 0.0):
            raise ValueError(f"tol must be finite and > 0, got {self.tol}")


@dataclass(frozen=True)
class ProxSolution:
    x_star: float
    iterations: int
    branch: Branch


def prox_objective(problem: ProxProblem, x) -> float:
    """Evaluate f_y(x) = 0.5*(y - x)**2 + lam*g(x) (scalar or array x)."""
    return 0.5 * (problem.y - np.asarray(x, dtype=float)) ** 2 + problem.lam * eval_g(
        problem.g, x
    )


def breakpoint_a0(g: SurrogateSpec, lam: float) -> float:
    """Largest x >= 0 with g''(x) = -1/lam, or 0 when none exists.

    |g''| is decreasing for every supported kind, so the equation has at most
    one positive root and admits a closed form per kind.
    """
    if not (math.isfinite(lam) and lam > 0.0):
        raise ValueError(f"lam must be finite and > 0, got {lam}")
    kind, p = g.kind, g.params
    if kind is SurrogateKind.IDENTITY:
        return 0.0
    if kind is SurrogateKind.LP:
        q = p["p"]
        return (lam * q * (1.0 - q)) ** (1.0 / (2.0 - q))
    if kind is SurrogateKind.GEMAN:
        e = p["epsilon"]
        return max((2.0 * lam * e) ** (1.0 / 3.0) - e, 0.0)
    if kind is SurrogateKind.LAPLACE:
        gam = p["gamma"]
        return gam * math.log(lam / gam**2) if lam > gam**2 else 0.0
    if kind is SurrogateKind.LOG:
        return max(math.sqrt(lam) - p["gamma"], 0.0)
    if kind is SurrogateKind.LOGARITHM:
        gam = p["gamma"]
        return max(math.sqrt(lam / math.log(gam + 1.0)) - 1.0 / gam, 0.0)
    # etp
    gam = p["gamma"]
    s = (1.0 - math.exp(-gam)) / (lam * gam**2)
    return -math.log(s) / gam if s < 1.0 else 0.0


def solve_threshold(problem: ProxProblem, max_iter: int = DEFAULT_MAX_ITER) -> ProxSolution:
    """Globally minimize f_y over x >= 0.

    Returns the minimizer together with the branch that produced it:
    the accelerated fixed-point iterate, the breakpoint, or zero.

    Raises
    ------
    IterationLimitError
        if the fixed-point iteration does not meet ``problem.tol`` within
        ``max_iter`` accelerated steps (non-contraction, e.g. from surrogate
        parameters that are numerically degenerate).
    """
    y, lam, g, tol = problem.y, problem.lam, problem.g, problem.tol
    if y == 0.0:
        return ProxSolution(0.0, 0, Branch.ZERO)

    a0 = breakpoint_a0(g, lam)

    def shift(x: float) -> float:
        # J1; iterates are kept inside [a0, y] where the map is contractive
        # and g' is defined (lp has a pole at 0 but its a0 is always > 0)
        return min(max(y - lam * grad_g(g, x), a0), y)

    slope_at_a0 = (a0 - y) + lam * grad_g(g, a0)
    iterations = 0
    if slope_at_a0 < 0.0:
        # interior stationary point exists beyond a0; find the fixed point
        x = y
        while True:
            x1 = shift(x)
            x2 = shift(x1)
            resid = x2 - 2.0 * x1 + x
            if abs(resid) <= tol or abs(resid) < _AITKEN_GUARD:
                break
            if iterations >= max_iter:
                raise IterationLimitError(
                    f"thresholding did not converge in {max_iter} iterations "
                    f"(residual {abs(resid):.3e}, tol {tol:.3e})"
                )
            x = min(max(x1 - (x2 - x1) * (x1 - x) / resid, a0), y)
            if not math.isfinite(x):
                raise NumericalError("thresholding iterate became non-finite")
            iterations += 1
        x_hat = shift(x)
        branch = Branch.FIXED_POINT
    else:
        x_hat = a0
        branch = Branch.BREAKPOINT

    f0 = 0.5 * y * y + lam * eval_g(g, 0.0)
    f_hat = 0.5 * (y - x_hat) ** 2 + lam * eval_g(g, x_hat)
    if f0 > f_hat:
        return ProxSolution(x_hat, iterations, branch)
    # ties go to the sparser answer
    return ProxSolution(0.0, iterations, Branch.ZERO)


def apply_threshold(value: float, lam: float, g: SurrogateSpec,
                    tol: float = 1e-10, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Signed convenience wrapper: odd extension T_g(-y) = -T_g(y).

    Callers inside the solver pass norms (always >= 0); this exists for
    defensive use on raw signed scalars.
    """
    sol = solve_threshold(ProxProblem(abs(value), lam, g, tol), max_iter)
    return math.copysign(sol.x_star, value) if sol.x_star != 0.0 else 0.0


def oracle_threshold(problem: ProxProblem, grid_step: float) -> float:
    """Brute-force reference minimizer: dense grid on [0, y], then trisection.

    Used by tests and the CLI ``prox --oracle`` mode only; independent of
    :func:`solve_threshold`.
    """
    if not grid_step > 0.0:
        raise ValueError(f"grid_step must be > 0, got {grid_step}")
    y = problem.y
    if y == 0.0:
        return 0.0

    def f(x):
        return prox_objective(problem, x)

    xs = np.arange(0.0, y, grid_step)
    xs = np.append(xs, y)
    values = f(xs)
    i = int(np.argmin(values))
    lo = xs[max(i - 1, 0)]
    hi = xs[min(i + 1, len(xs) - 1)]
    for _ in range(200):
        third = (hi - lo) / 3.0
        m1 = lo + third
        m2 = hi - third
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    best = 0.5 * (lo + hi)
    # endpoints are often the exact answer; prefer them (and 0 on ties)
    for cand in (y, 0.0):
        if f(cand) <= f(best):
            best = cand
    return float(best)
