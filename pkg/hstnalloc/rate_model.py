"""
hstnalloc.rate_model
====================

Deterministic-equivalent model of the ergodic rate of a terrestrial MT
served by N BSs over a Rayleigh-fading channel with known large-scale
fading.

The rate is evaluated through the auxiliary fixed-point parameter chi. With
``a_n = p_n * g_n / D`` the per-BS SNR terms, chi is the unique root >= 1 of

    chi - 1 - sum_n a_n * chi / (chi + a_n * M) = 0

and the rate equals the minimum over ``x >= 0`` of

    y(x) = sum_n log2(1 + a_n * M * exp(-x)) + M * log2(e) * (x + exp(-x))

minus ``M * log2(e)``. The minimum is attained at ``x = ln(chi)``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

#: log2(e)
LOG2E = np.log2(np.e)

#: Maximum residual accepted for the fixed point, relative to chi.
CHI_TOLERANCE = 1e-10
#: Width of the final bracket of the batched solver in ln(chi).
BATCH_TOLERANCE = 1e-13


@dataclass(frozen=True, eq=False)
class PairContext:
    """
    Data of a single (user, channel) pair entering the rate model.

    Attributes:
        gains_sq: Length-N array of squared large-scale amplitudes
            (power gains) from each BS to the user on the channel.
        denom: Interference plus noise power in mW.
        n_antennas: The number M of antennas at the user.
    """

    gains_sq: np.ndarray
    denom: float
    n_antennas: int

    def __post_init__(self):
        gains_sq = np.array(self.gains_sq, dtype=np.float64).ravel()
        if not np.all(np.isfinite(gains_sq)) or np.any(gains_sq < 0):
            raise ValueError("'gains_sq' must be non-negative and finite.")
        if not self.denom > 0 or not np.isfinite(self.denom):
            raise ValueError("'denom' must be positive and finite.")
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 1:
            raise ValueError("'n_antennas' must be a positive integer.")
        gains_sq.setflags(write=False)
        object.__setattr__(self, "gains_sq", gains_sq)
        object.__setattr__(self, "denom", float(self.denom))
        object.__setattr__(self, "n_antennas", int(self.n_antennas))

    @property
    def n_bs(self):
        return self.gains_sq.size

    @property
    def snr_slopes(self):
        """Per-BS SNR per unit of transmit power, g_n / D."""
        return self.gains_sq / self.denom


@dataclass(frozen=True)
class ChiSolution:
    """
    Solution of the fixed-point equation.

    Attributes:
        chi: The fixed point chi >= 1.
        residual: Absolute residual of the fixed-point equation at chi
            divided by chi.
    """

    chi: float
    residual: float

    @property
    def x(self):
        """The inner variable x = ln(chi)."""
        return float(np.log(self.chi))


def pair_context(large_scale, cfg, user, channel):
    """
    Build the PairContext of a given user on a given channel.

    Args:
        large_scale: The LargeScaleState of the deployment.
        cfg: The ScenarioConfig.
        user: Index of the terrestrial MT.
        channel: Index of the channel.

    Return:
        The PairContext of the pair.
    """
    return PairContext(
        gains_sq=large_scale.terr_gain[user, channel] ** 2,
        denom=cfg.sat_interference[user, channel] + cfg.noise_power,
        n_antennas=cfg.n_antennas,
    )


def check_power(p, n_bs):
    """
    Validate a power allocation.

    Args:
        p: Array-like of per-BS transmit powers in mW.
        n_bs: The expected number of BSs.

    Return:
        The powers as float64 array.

    Raises:
        ValueError if 'p' has the wrong length, is negative or not finite.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (n_bs,):
        raise ValueError(f"Power allocation must have length {n_bs}, not shape {p.shape}.")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("Power allocation must be non-negative and finite.")
    return p


def _snr(ctx, p):
    return check_power(p, ctx.n_bs) * ctx.gains_sq / ctx.denom


def _residual(a, m, chi):
    return chi - 1.0 - np.sum(a * chi / (chi + a * m))


def _scaled_residual(a, m, chi):
    """The residual divided by chi. Bounded, and proportional to dy/dx."""
    return -np.expm1(-np.log(chi)) - np.sum(a / (chi + a * m), axis=-1)


def _upper_bracket(a, m):
    """
    Upper end of an interval [1, b] containing the fixed point.

    Every summand of the fixed-point equation is below both a_n and
    chi / M, so that chi < 1 + sum(a) and, if fewer than M BSs transmit,
    chi < M / (M - N).
    """
    upper = 1.0 + np.sum(a, axis=-1)
    n_active = np.sum(a > 0, axis=-1)
    bound = np.where(n_active < m, m / np.maximum(m - n_active, 1), np.inf)
    return np.minimum(upper, bound)


def chi_residual(ctx, p, chi):
    """
    Residual of the fixed-point equation defining chi.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.
        chi: The candidate value of chi, must be positive.

    Return:
        ``chi - 1 - sum_n p_n g_n chi / (D chi + p_n g_n M)``, which is zero
        if and only if chi solves the fixed-point equation.
    """
    if not chi > 0:
        raise ValueError("'chi' must be positive.")
    return float(_residual(_snr(ctx, p), ctx.n_antennas, float(chi)))


def _solve_chi(a, m):
    if not np.any(a > 0):
        return 1.0, 0.0
    upper = float(_upper_bracket(a, m))
    if not _scaled_residual(a, m, upper) > 0.0:
        # sum(a) below the resolution of chi.
        return upper, abs(_scaled_residual(a, m, upper))
    # The residual is non-positive at 1 and positive at the upper bound.
    chi, info = brentq(
        lambda chi: _scaled_residual(a, m, chi),
        1.0,
        upper,
        xtol=1e-14,
        rtol=4.0 * np.finfo(np.float64).eps,
        maxiter=200,
        full_output=True,
        disp=False,
    )
    residual = abs(_scaled_residual(a, m, chi))
    if not info.converged or residual > CHI_TOLERANCE:
        raise RuntimeError(
            f"Fixed-point solver did not converge (residual {residual:.3g}, "
            f"{info.iterations} iterations)."
        )
    return chi, residual


def solve_chi(ctx, p):
    """
    Solve the fixed-point equation for chi.

    The root is bracketed on [1, 1 + sum_n a_n], narrowed to
    [1, M / (M - N)] when fewer than M BSs transmit, and found with
    Brent's method.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.

    Return:
        A ChiSolution with relative residual below ``CHI_TOLERANCE``.

    Raises:
        RuntimeError if the solver fails to converge, which indicates
        corrupted inputs.
    """
    chi, residual = _solve_chi(_snr(ctx, p), ctx.n_antennas)
    return ChiSolution(chi=float(chi), residual=float(residual))


def solve_chi_batch(ctx, powers, tol=BATCH_TOLERANCE):
    """
    Solve the fixed-point equation for many power allocations at once.

    Uses vectorized bisection on x = ln(chi) until the bracket is narrower
    than 'tol'.

    Args:
        ctx: The PairContext.
        powers: Array of shape (L, N) of power allocations.
        tol: Width of the final bracket in ln(chi).

    Return:
        Array of length L containing chi for every allocation.
    """
    a = np.atleast_2d(powers) * ctx.gains_sq / ctx.denom
    m = ctx.n_antennas
    low = np.zeros(a.shape[0])
    high = np.log(_upper_bracket(a, m))
    width = max(float(np.max(high)), tol)
    n_iter = int(np.ceil(np.log2(width / tol)))
    for _ in range(n_iter):
        mid = 0.5 * (low + high)
        res = -np.expm1(-mid) - np.sum(a / (np.exp(mid)[:, None] + a * m), axis=1)
        positive = res > 0
        high = np.where(positive, mid, high)
        low = np.where(positive, low, mid)
    chi = np.exp(0.5 * (low + high))
    chi[~np.any(a > 0, axis=1)] = 1.0
    return chi


def y_value(ctx, p, x):
    """
    The inner objective y(x) of the max-min formulation.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.
        x: The inner variable, x >= 0.

    Return:
        The value of y in bit/s/Hz.
    """
    a = _snr(ctx, p)
    m = ctx.n_antennas
    e = np.exp(-x)
    return float(LOG2E * (np.sum(np.log1p(a * m * e)) + m * (x + e)))


def dy_dx(ctx, p, x):
    """
    First derivative of y with respect to x.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.
        x: The inner variable, x >= 0.
    """
    a = _snr(ctx, p)
    m = ctx.n_antennas
    return float(
        LOG2E * (m * -np.expm1(-x) - np.sum(a * m / (np.exp(x) + a * m)))
    )


def d2y_dx2(ctx, p, x):
    """
    Second derivative of y with respect to x. Always positive.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.
        x: The inner variable, x >= 0.
    """
    a = _snr(ctx, p)
    m = ctx.n_antennas
    ex = np.exp(x)
    return float(LOG2E * (m / ex + np.sum(a * m * ex / (ex + a * m) ** 2)))


def dy_dp(ctx, p, x):
    """
    Gradient of y with respect to the transmit powers for fixed x.

    Evaluated at the inner minimizer, this is the gradient of the
    deterministic-equivalent rate with respect to the powers.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.
        x: The inner variable, x >= 0.

    Return:
        Length-N array in bit/s/Hz per mW.
    """
    slopes = ctx.snr_slopes
    m = ctx.n_antennas
    return LOG2E * slopes * m / (np.exp(x) + np.asarray(p) * slopes * m)


def inner_min_x(ctx, p):
    """
    Minimize y over x >= 0.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.

    Return:
        A tuple ``(x_star, y_min)`` with ``x_star = ln(chi)``.
    """
    x_star = solve_chi(ctx, p).x
    return x_star, y_value(ctx, p, x_star)


def _upsilon(a, m, chi):
    # y(ln chi) - M log2(e), rearranged to avoid cancellation at low SNR.
    u = chi - 1.0
    return LOG2E * (np.sum(np.log1p(a * m / chi)) + m * (np.log1p(u) - u / chi))


def upsilon(ctx, p):
    """
    Deterministic-equivalent ergodic rate of a pair.

    Equals the minimum of y over x >= 0 minus ``M * log2(e)``.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.

    Return:
        The rate in bit/s/Hz.
    """
    a = _snr(ctx, p)
    m = ctx.n_antennas
    chi, _ = _solve_chi(a, m)
    return float(_upsilon(a, m, chi))


def upsilon_batch(ctx, powers):
    """
    Deterministic-equivalent rate for each row of 'powers'.

    Args:
        ctx: The PairContext.
        powers: Array of shape (L, N) of power allocations.

    Return:
        Length-L array of rates in bit/s/Hz.
    """
    powers = np.atleast_2d(powers)
    a = powers * ctx.gains_sq / ctx.denom
    m = ctx.n_antennas
    chi = solve_chi_batch(ctx, powers)
    u = chi - 1.0
    return LOG2E * (
        np.sum(np.log1p(a * m / chi[:, None]), axis=1)
        + m * (np.log1p(u) - u / chi)
    )


def upsilon_direct(ctx, p):
    """
    Deterministic-equivalent rate evaluated in its three-term form.

    Args:
        ctx: The PairContext.
        p: The per-BS transmit powers in mW.

    Return:
        The rate in bit/s/Hz.
    """
    a = _snr(ctx, p)
    m = ctx.n_antennas
    chi, _ = _solve_chi(a, m)
    first = np.sum(np.log2(1.0 + a * m / chi))
    second = m * np.log2(1.0 + np.sum(a * chi / (chi + a * m)))
    third = m * LOG2E * np.sum(a / (chi + a * m))
    return float(first + second - third)
