"""
hstnalloc.power
===============

Power allocation for a single (user, channel) pair.

The proposed allocation maximizes the deterministic-equivalent rate subject
to the user's power budget and the leakage-interference threshold of the
satellite MT on the channel. The rate is the minimum over x of the convex
function y, so that the problem takes the form of a max-min program that is
concave in the powers. It is solved with an away-step Frank-Wolfe method
whose gradient is that of y at the inner minimizer.

Waterfilling and equal-power allocations serve as baselines and a grid
search as reference for small numbers of BSs.
"""
from dataclasses import dataclass
import logging

import numpy as np
from scipy.optimize import minimize_scalar

from hstnalloc.rate_model import (
    check_power,
    dy_dp,
    dy_dx,
    inner_min_x,
    solve_chi,
    upsilon,
    upsilon_batch,
)

LOGGER = logging.getLogger(__name__)

#: Maximum number of Frank-Wolfe iterations.
MAX_ITERATIONS = 64
#: Relative tolerance of the Frank-Wolfe gap.
GAP_TOLERANCE = 1e-6
#: Absolute floor of the Frank-Wolfe gap tolerance.
GAP_FLOOR = 1e-9
#: Relative tolerance of the feasibility checks.
FEASIBILITY_TOLERANCE = 1e-9
#: Maximum number of BSs supported by the grid oracle.
GRID_MAX_BS = 3


@dataclass(frozen=True, eq=False)
class PowerConstraints:
    """
    Constraints on the power allocation of a (user, channel) pair.

    Attributes:
        budget: The user's transmit power budget in mW.
        leak_threshold: The leakage threshold of the channel in mW.
        leak_coeff: Length-N array of power gains from each BS to the
            satellite MT of the channel, including the array suppression.
    """

    budget: float
    leak_threshold: float
    leak_coeff: np.ndarray

    def __post_init__(self):
        leak_coeff = np.array(self.leak_coeff, dtype=np.float64).ravel()
        if not np.all(np.isfinite(leak_coeff)) or np.any(leak_coeff < 0):
            raise ValueError("'leak_coeff' must be non-negative and finite.")
        for name in ["budget", "leak_threshold"]:
            value = getattr(self, name)
            if not value >= 0 or not np.isfinite(value):
                raise ValueError(f"'{name}' must be non-negative and finite.")
            object.__setattr__(self, name, float(value))
        leak_coeff.setflags(write=False)
        object.__setattr__(self, "leak_coeff", leak_coeff)

    def is_feasible(self, p, rtol=FEASIBILITY_TOLERANCE):
        """
        Check whether an allocation satisfies both constraints.

        Args:
            p: The per-BS powers in mW.
            rtol: Relative tolerance applied to both constraints.
        """
        p = np.asarray(p)
        return bool(
            np.all(p >= 0)
            and p.sum() <= self.budget * (1.0 + rtol)
            and leakage(p, self) <= self.leak_threshold * (1.0 + rtol)
        )


@dataclass(eq=False)
class PairSolution:
    """
    A power allocation of a (user, channel) pair and its rate.

    Attributes:
        p_star: The per-BS powers in mW.
        rate: The deterministic-equivalent rate in bit/s/Hz.
        x_star: The minimizer of y for 'p_star'.
        fw_gap: The final Frank-Wolfe gap. NaN for the baselines.
        iterations: The number of solver iterations.
        scheme: Name of the scheme that produced the allocation.
        converged: Whether the gap tolerance was reached.
    """

    p_star: np.ndarray
    rate: float
    x_star: float
    fw_gap: float = np.nan
    iterations: int = 0
    scheme: str = "proposed"
    converged: bool = True


def power_constraints(large_scale, cfg, user, channel):
    """
    Build the PowerConstraints of a user on a channel.

    Args:
        large_scale: The LargeScaleState of the deployment.
        cfg: The ScenarioConfig.
        user: Index of the terrestrial MT.
        channel: Index of the channel.
    """
    leak_coeff = large_scale.sat_gain[channel] ** 2
    if cfg.include_suppression_in_leakage:
        leak_coeff = leak_coeff * cfg.suppression[channel] ** 2
    return PowerConstraints(
        budget=cfg.power_budget[user],
        leak_threshold=cfg.leakage_threshold[channel],
        leak_coeff=leak_coeff,
    )


def leakage(p, c):
    """
    Expected leakage interference at the satellite MT.

    Args:
        p: The per-BS powers in mW.
        c: The PowerConstraints of the pair.

    Return:
        The leakage power in mW.
    """
    return float(np.dot(np.asarray(p, dtype=np.float64), c.leak_coeff))


def polytope_vertices(c, active=None):
    """
    Enumerate the vertices of the feasible power set.

    Vertices have at most two non-zero coordinates: the origin, one point on
    every active axis where the tighter of the two constraints binds and,
    for pairs of active BSs, the points where both constraints bind.

    Args:
        c: The PowerConstraints.
        active: Optional boolean mask of BSs that may transmit.

    Return:
        Array of shape (V, N). The origin is always the first row.
    """
    n = c.leak_coeff.size
    if active is None:
        active = np.ones(n, dtype=bool)
    budget, threshold, coeff = c.budget, c.leak_threshold, c.leak_coeff

    vertices = [np.zeros(n)]
    indices = np.flatnonzero(active)
    for ind in indices:
        extent = budget
        if coeff[ind] > 0:
            extent = min(budget, threshold / coeff[ind])
        if extent > 0:
            vertex = np.zeros(n)
            vertex[ind] = extent
            vertices.append(vertex)

    for pos, ind_1 in enumerate(indices):
        for ind_2 in indices[pos + 1:]:
            c_1, c_2 = coeff[ind_1], coeff[ind_2]
            if c_1 == c_2:
                continue
            p_1 = (threshold - c_2 * budget) / (c_1 - c_2)
            p_2 = budget - p_1
            if p_1 > 0 and p_2 > 0:
                vertex = np.zeros(n)
                vertex[ind_1] = p_1
                vertex[ind_2] = p_2
                vertices.append(vertex)
    return np.stack(vertices)


def _objective(ctx, p):
    """The concave function min_x y(p, x) and its minimizer."""
    x_star, y_min = inner_min_x(ctx, p)
    return y_min, x_star


def _line_search(ctx, p, direction, max_step, value):
    """
    Maximize the objective along 'p + step * direction' for
    step in [0, max_step].

    Return:
        Tuple ``(step, value)``. The step is zero if no improvement
        over 'value' is found.
    """
    def negative(step):
        return -_objective(ctx, np.maximum(p + step * direction, 0.0))[0]

    result = minimize_scalar(
        negative,
        bounds=(0.0, max_step),
        method="bounded",
        options={"xatol": 1e-12 * max(max_step, 1.0)},
    )
    candidates = [(result.x, -result.fun), (max_step, -negative(max_step))]
    step, best = max(candidates, key=lambda cand: cand[1])
    if best <= value:
        return 0.0, value
    return step, best


def _solution_from_power(ctx, p, scheme, fw_gap=np.nan, iterations=0, converged=True):
    x_star = solve_chi(ctx, p).x
    return PairSolution(
        p_star=p,
        rate=upsilon(ctx, p),
        x_star=x_star,
        fw_gap=fw_gap,
        iterations=iterations,
        scheme=scheme,
        converged=converged,
    )


def solve_pair(ctx, c, max_iterations=MAX_ITERATIONS, gap_tolerance=GAP_TOLERANCE):
    """
    Find the rate-maximizing power allocation of a pair.

    Runs an away-step Frank-Wolfe method over the vertices of the feasible
    set. The linear subproblems are solved exactly by evaluating all
    vertices, ties resolved in favor of the lowest vertex index, and step
    sizes are obtained by exact line search. BSs with zero gain do not
    transmit.

    Args:
        ctx: The PairContext of the pair.
        c: The PowerConstraints of the pair.
        max_iterations: The maximum number of Frank-Wolfe iterations.
        gap_tolerance: Relative tolerance of the Frank-Wolfe gap.

    Return:
        A PairSolution.
    """
    n = ctx.n_bs
    if c.leak_coeff.size != n:
        raise ValueError(
            "PairContext and PowerConstraints must have the same number of BSs."
        )
    active = ctx.gains_sq > 0
    vertices = polytope_vertices(c, active)
    if vertices.shape[0] == 1:
        return _solution_from_power(ctx, np.zeros(n), "proposed", fw_gap=0.0)

    # Start from the best vertex.
    values = [_objective(ctx, vertex)[0] for vertex in vertices]
    start = int(np.argmax(values))
    weights = {start: 1.0}
    p = vertices[start].copy()
    value, x_star = _objective(ctx, p)
    m_log2e = ctx.n_antennas * np.log2(np.e)

    gap = np.inf
    converged = False
    iteration = 0
    for iteration in range(max_iterations + 1):
        grad = dy_dp(ctx, p, x_star)
        scores = vertices @ grad
        fw_ind = int(np.argmax(scores))
        gap = float(scores[fw_ind] - grad @ p)
        tolerance = max(gap_tolerance * (value - m_log2e), GAP_FLOOR)
        if gap <= tolerance:
            converged = True
            break
        if iteration == max_iterations:
            break

        active_inds = sorted(weights)
        away_ind = active_inds[int(np.argmin(scores[active_inds]))]
        away_gap = float(grad @ p - scores[away_ind])

        if gap >= away_gap or len(weights) == 1:
            direction = vertices[fw_ind] - p
            max_step = 1.0
            away = False
        else:
            direction = p - vertices[away_ind]
            away_weight = weights[away_ind]
            max_step = away_weight / (1.0 - away_weight)
            away = True

        step, new_value = _line_search(ctx, p, direction, max_step, value)
        if step == 0.0:
            LOGGER.debug(
                "Line search stalled after %s iterations with gap %.3g.",
                iteration,
                gap,
            )
            break

        if away:
            weights = {ind: (1.0 + step) * lam for ind, lam in weights.items()}
            weights[away_ind] -= step
        else:
            weights = {ind: (1.0 - step) * lam for ind, lam in weights.items()}
            weights[fw_ind] = weights.get(fw_ind, 0.0) + step
        weights = {ind: lam for ind, lam in weights.items() if lam > 1e-15}

        p = np.maximum(p + step * direction, 0.0)
        value, x_star = _objective(ctx, p)

    if not converged:
        LOGGER.warning(
            "Frank-Wolfe stopped after %s iterations with gap %.3g above "
            "tolerance.",
            iteration,
            gap,
        )
    LOGGER.debug("Solved pair in %s iterations, gap %.3g.", iteration, gap)
    return _solution_from_power(
        ctx, p, "proposed", fw_gap=gap, iterations=iteration, converged=converged
    )


def saddle_certificate(ctx, c, solution):
    """
    Optimality certificate of a pair solution.

    Args:
        ctx: The PairContext.
        c: The PowerConstraints.
        solution: The PairSolution to check.

    Return:
        A tuple ``(stationarity, gap)`` of the absolute derivative of y with
        respect to x at the solution and the largest increase of the
        linearized rate towards any vertex of the feasible set.
    """
    p = solution.p_star
    stationarity = abs(dy_dx(ctx, p, solution.x_star))
    grad = dy_dp(ctx, p, solution.x_star)
    vertices = polytope_vertices(c, ctx.gains_sq > 0)
    gap = float(np.max(vertices @ grad - grad @ p))
    return stationarity, gap


def scale_to_leakage(p, c):
    """
    Scale down an allocation whose leakage exceeds the threshold so that
    the leakage equals the threshold.

    Args:
        p: The per-BS powers in mW.
        c: The PowerConstraints.

    Return:
        The possibly scaled allocation.
    """
    leak = leakage(p, c)
    if leak > c.leak_threshold:
        p = p * (c.leak_threshold / leak)
    return p


def waterfill(slopes, total):
    """
    Classic waterfilling over parallel channels.

    Args:
        slopes: Array of SNR per unit power of each channel. Channels with
            zero slope receive no power.
        total: The total power to distribute.

    Return:
        The power allocated to each channel.
    """
    slopes = np.asarray(slopes, dtype=np.float64)
    power = np.zeros_like(slopes)
    usable = np.flatnonzero(slopes > 0)
    if total <= 0 or usable.size == 0:
        return power

    # Noise levels sorted from best to worst channel.
    levels = 1.0 / slopes[usable]
    order = np.argsort(levels, kind="stable")
    levels = levels[order]

    n_used = levels.size
    while n_used > 0:
        mu = (total + levels[:n_used].sum()) / n_used
        if mu > levels[n_used - 1]:
            break
        n_used -= 1
    power[usable[order[:n_used]]] = mu - levels[:n_used]
    return power


def waterfilling_baseline(ctx, c):
    """
    Waterfilling allocation with leakage rescaling.

    Power is waterfilled over the BSs using the SNR slopes ``g_n M / D``
    against the budget, ignoring the leakage constraint. If the resulting
    leakage exceeds the threshold, the whole allocation is scaled down to
    meet it.

    Args:
        ctx: The PairContext.
        c: The PowerConstraints.

    Return:
        A PairSolution.
    """
    p = waterfill(ctx.snr_slopes * ctx.n_antennas, c.budget)
    p = scale_to_leakage(p, c)
    return _solution_from_power(ctx, p, "waterfilling")


def equal_power_baseline(ctx, c):
    """
    Equal power allocation with leakage rescaling.

    Every BS transmits ``P / N``. If the leakage exceeds the threshold the
    allocation is scaled down to meet it.

    Args:
        ctx: The PairContext.
        c: The PowerConstraints.

    Return:
        A PairSolution.
    """
    p = np.full(ctx.n_bs, c.budget / ctx.n_bs)
    p = scale_to_leakage(p, c)
    return _solution_from_power(ctx, p, "equal_power")


def grid_oracle(ctx, c, resolution):
    """
    Brute-force maximum of the rate over a uniform grid.

    The grid covers [0, P]^N with 'resolution' points per axis and only
    feasible points are evaluated.

    Args:
        ctx: The PairContext.
        c: The PowerConstraints.
        resolution: Number of grid points per axis, at least 2.

    Return:
        The largest rate on the grid in bit/s/Hz.

    Raises:
        ValueError if N exceeds 3 or resolution is below 2.
    """
    n = ctx.n_bs
    if n > GRID_MAX_BS:
        raise ValueError(f"The grid oracle supports at most {GRID_MAX_BS} BSs.")
    if resolution < 2:
        raise ValueError("'resolution' must be at least 2.")
    if c.budget == 0:
        return 0.0

    axis = np.linspace(0.0, c.budget, int(resolution))
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), -1).reshape(-1, n)
    feasible = (grid.sum(axis=1) <= c.budget * (1.0 + 1e-12)) * (
        grid @ c.leak_coeff <= c.leak_threshold * (1.0 + 1e-12)
    )
    grid = grid[feasible]
    return float(np.max(upsilon_batch(ctx, grid)))


def check_solution(ctx, c, solution):
    """
    Validate a pair solution against its constraints.

    Raises:
        ValueError if the allocation is infeasible.
    """
    p = check_power(solution.p_star, ctx.n_bs)
    if not c.is_feasible(p):
        raise ValueError(
            f"Allocation of scheme '{solution.scheme}' violates the power or "
            "leakage constraint."
        )
