"""Independent minimizers for the same simplex-constrained objectives.

These certify the closed-form solvers without trusting the formulas under
test: multiplicative-weights descent (exponentiated gradient) for the
entropy-family regularizers whose optima are interior, projected gradient
for the L2/Tsallis family whose optima touch the boundary, and an
exhaustive barycentric grid for m <= 3.  The numerical Fenchel conjugate
is built on the same iterative machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ALIBI,
    KL_PRIOR,
    L2,
    SHANNON,
    TSALLIS,
    NumericalFailure,
    RegularizerSpec,
    Scores,
    SimplexDistribution,
    key_distances,
    objective_rows,
)

__all__ = [
    "EXPONENTIATED_GRADIENT",
    "PROJECTED_GRADIENT",
    "GRID_SEARCH",
    "SolverConfig",
    "OracleResult",
    "default_config",
    "minimize_on_simplex",
    "grid_search_simplex",
    "fenchel_conjugate",
]

EXPONENTIATED_GRADIENT = "exponentiated-gradient"
PROJECTED_GRADIENT = "projected-gradient"
GRID_SEARCH = "grid-search"
_METHODS = (EXPONENTIATED_GRADIENT, PROJECTED_GRADIENT, GRID_SEARCH)

# Below this step size backtracking has hit float resolution and the
# iterate cannot move any further.
_MIN_STEP = 1e-30


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget, sup-norm stopping tolerance, initial step, method."""

    max_iterations: int = 50000
    tolerance: float = 1e-12
    step_size: float = 0.1
    method: str = EXPONENTIATED_GRADIENT

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if not self.step_size > 0.0:
            raise ValueError("step_size must be positive")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class OracleResult:
    """Final iterate, the best objective value reached, and how the search
    ended.

    ``objective_trace`` records the best value seen after each accepted
    step, so the monotone-descent property of backtracking is checkable.
    """

    distribution: SimplexDistribution
    objective: float
    iterations: int
    converged: bool
    objective_trace: tuple[float, ...] = ()


def default_config(reg: RegularizerSpec) -> SolverConfig:
    """Exponentiated gradient for the entropy family (its multiplicative
    iterates stay interior, where those objectives' gradients blow up at
    the boundary), projected gradient for L2/Tsallis whose optima are
    sparse."""
    if reg.kind in (L2, TSALLIS):
        return SolverConfig(method=PROJECTED_GRADIENT)
    return SolverConfig(method=EXPONENTIATED_GRADIENT)


def _objective(w: np.ndarray, s: Scores, reg: RegularizerSpec) -> float:
    # Exactly-rounded summation: step acceptance near the optimum compares
    # objective values whose true differences sit far below the noise of a
    # naive left-to-right accumulation, and every spurious rejection raises
    # the solver's error floor.
    terms = [-(w * s.values)]
    kind = reg.kind
    safe_log = np.log(np.where(w > 0.0, w, 1.0))
    if kind == SHANNON:
        terms.append(reg.temperature * (w * safe_log))
    elif kind == L2:
        terms.append(0.5 * w * w)
    elif kind == TSALLIS:
        a = reg.alpha
        terms.append((w**a - w) / (a * (a - 1.0)))
    elif kind == ALIBI:
        terms.append(reg.temperature * (w * safe_log))
        terms.append(reg.gamma * w * key_distances(reg.query_position, w.size))
    elif kind == KL_PRIOR:
        terms.append(reg.temperature * w * (safe_log - np.log(reg.prior.weights)))
    else:
        raise ValueError(f"unknown regularizer kind {kind!r}")
    return math.fsum(np.concatenate(terms))


def _objective_gradient(w: np.ndarray, s: Scores, reg: RegularizerSpec) -> np.ndarray:
    kind = reg.kind
    g = -s.values
    if kind == SHANNON:
        return g + reg.temperature * (np.log(w) + 1.0)
    if kind == L2:
        return g + w
    if kind == TSALLIS:
        a = reg.alpha
        return g + (a * w ** (a - 1.0) - 1.0) / (a * (a - 1.0))
    if kind == ALIBI:
        d = key_distances(reg.query_position, w.size)
        return g + reg.temperature * (np.log(w) + 1.0) + reg.gamma * d
    if kind == KL_PRIOR:
        return g + reg.temperature * (np.log(w / reg.prior.weights) + 1.0)
    raise ValueError(f"unknown regularizer kind {kind!r}")


def _multiplicative_step(w: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    t = np.log(w) - eta * g
    e = np.exp(t - t.max())
    return e / e.sum()


def _project_simplex(v: np.ndarray) -> np.ndarray:
    # Deliberately local: the oracle must not lean on the closed forms it
    # certifies, so the Euclidean projection is written out here.
    v = v - v.max()
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = int(np.count_nonzero(1.0 + k * u > cssv))
    theta = (cssv[rho - 1] - 1.0) / rho
    return np.maximum(v - theta, 0.0)


def _projected_step(w: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    return _project_simplex(w - eta * g)


def minimize_on_simplex(
    s: Scores, reg: RegularizerSpec, cfg: SolverConfig | None = None
) -> OracleResult:
    """Iteratively minimize -<p, s> + Omega(p) from the uniform start.

    The step size halves whenever a trial step would genuinely increase
    the objective (beyond its own rounding), so the recorded sequence of
    best values is non-increasing.  Convergence is declared on sup-norm
    iterate change below ``cfg.tolerance``; running out of iterations
    returns ``converged=False`` and leaves the verdict to the caller.
    """
    if cfg is None:
        cfg = default_config(reg)
    if cfg.method == GRID_SEARCH:
        raise ValueError("use grid_search_simplex for exhaustive search")
    step = (
        _multiplicative_step if cfg.method == EXPONENTIATED_GRADIENT else _projected_step
    )
    m = len(s)
    w = np.full(m, 1.0 / m)
    best = _objective(w, s, reg)
    if math.isnan(best):
        raise NumericalFailure("objective is NaN at the uniform start")
    trace = [best]
    eta = cfg.step_size
    iterations = 0
    converged = False
    for it in range(1, cfg.max_iterations + 1):
        iterations = it
        g = _objective_gradient(w, s, reg)
        # Accept within one rounding unit of the best value seen: near the
        # optimum the true per-step decrease falls below the resolution of
        # the objective value itself, and a strict comparison would freeze
        # the iterate one rounding boundary short.  The recorded sequence
        # is the running minimum, so it stays exactly non-increasing, and
        # genuine ascent beyond rounding still triggers the halving.
        slack = 2.0 * math.ulp(max(1.0, abs(best)))
        candidate = None
        while eta >= _MIN_STEP:
            trial = step(w, g, eta)
            trial_obj = _objective(trial, s, reg)
            if math.isnan(trial_obj):
                raise NumericalFailure("objective became NaN during descent")
            if trial_obj <= best + slack:
                candidate = trial
                break
            eta *= 0.5
        if candidate is None:
            converged = True  # ascent at every step size: float-stationary
            break
        delta = float(np.max(np.abs(candidate - w)))
        w = candidate
        best = min(best, trial_obj)
        trace.append(best)
        if delta < cfg.tolerance:
            converged = True
            break
    return OracleResult(SimplexDistribution(w), best, iterations, converged, tuple(trace))


def grid_search_simplex(s: Scores, reg: RegularizerSpec, resolution: int) -> OracleResult:
    """Exhaustive minimum over the barycentric grid with the given number
    of subdivisions; only feasible for m <= 3.

    The returned point is within O(1/resolution) of the true optimum, and
    its objective can never beat the true minimum, which makes this a
    one-sided sandwich check for every closed form.
    """
    m = len(s)
    if m > 3:
        raise ValueError("grid search is exhaustive and limited to m <= 3")
    resolution = int(resolution)
    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    if m == 1:
        grid = np.ones((1, 1))
    elif m == 2:
        i = np.arange(resolution + 1, dtype=np.float64)
        grid = np.column_stack([i, resolution - i]) / resolution
    else:
        counts = np.arange(resolution + 1, 0, -1)
        i = np.repeat(np.arange(resolution + 1), counts)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        j = np.arange(i.size) - starts
        grid = np.column_stack([i, j, resolution - i - j]).astype(np.float64) / resolution
    objectives = objective_rows(grid, s, reg)
    best = int(np.argmin(objectives))
    return OracleResult(
        SimplexDistribution(grid[best]),
        float(objectives[best]),
        iterations=grid.shape[0],
        converged=True,
    )


def fenchel_conjugate(
    reg: RegularizerSpec, s: Scores, cfg: SolverConfig | None = None
) -> float:
    """sup over the simplex of <p, s> - Omega(p), computed numerically.

    Evaluated as the negative of the iterative minimum of the negated
    objective, so it never consults a closed form.  For the entropy
    regularizer at temperature tau this must match ``lse(s, tau)``, and
    the maximizer satisfies the conjugacy equality
    Omega(p*) + conjugate(s) = <p*, s>.
    """
    result = minimize_on_simplex(s, reg, cfg)
    return -result.objective
