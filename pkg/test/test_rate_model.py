"""
Tests for the deterministic-equivalent rate model defined in
hstnalloc.rate_model.
"""
import numpy as np
import pytest

from hstnalloc.montecarlo import ergodic_rate_mc
from hstnalloc.rate_model import (
    LOG2E,
    PairContext,
    chi_residual,
    d2y_dx2,
    dy_dp,
    dy_dx,
    inner_min_x,
    pair_context,
    solve_chi,
    solve_chi_batch,
    upsilon,
    upsilon_batch,
    upsilon_direct,
    y_value,
)
from hstnalloc.scenario import ScenarioConfig, sample_deployment

GOLDEN_RATIO = 0.5 * (1.0 + np.sqrt(5.0))


def random_case(rng, n_bs=None, n_antennas=None):
    """
    Draw a random pair context and power allocation.
    """
    if n_bs is None:
        n_bs = int(rng.integers(1, 6))
    if n_antennas is None:
        n_antennas = int(rng.integers(1, 5))
    ctx = PairContext(
        gains_sq=10 ** rng.uniform(-3, 2, size=n_bs),
        denom=10 ** rng.uniform(-1, 1),
        n_antennas=n_antennas,
    )
    p = 10 ** rng.uniform(-2, 1, size=n_bs)
    return ctx, p


def unit_case():
    """
    Single BS, single antenna and unit SNR.
    """
    return PairContext(gains_sq=[1.0], denom=1.0, n_antennas=1), np.ones(1)


def test_pair_context_validation():
    """
    Ensure that invalid pair contexts are rejected.
    """
    with pytest.raises(ValueError):
        PairContext(gains_sq=[-1.0], denom=1.0, n_antennas=1)
    with pytest.raises(ValueError):
        PairContext(gains_sq=[1.0], denom=0.0, n_antennas=1)
    with pytest.raises(ValueError):
        PairContext(gains_sq=[1.0], denom=1.0, n_antennas=0)


def test_pair_context_from_scenario():
    """
    Ensure that pair contexts are built from the scenario.
    """
    cfg = ScenarioConfig(sat_interference=2e-11)
    _, ls = sample_deployment(cfg, 0)
    ctx = pair_context(ls, cfg, 1, 2)
    assert np.allclose(ctx.gains_sq, ls.terr_gain[1, 2] ** 2)
    assert ctx.denom == pytest.approx(2e-11 + cfg.noise_power)
    assert ctx.n_antennas == cfg.n_antennas


def test_chi_residual():
    """
    Ensure that the residual of the fixed-point equation is evaluated
    correctly.
    """
    ctx = PairContext(gains_sq=[1.0, 2.0], denom=1.0, n_antennas=2)
    assert chi_residual(ctx, np.zeros(2), 1.0) == 0.0
    assert chi_residual(ctx, np.zeros(2), 2.0) == 1.0

    ctx, p = unit_case()
    assert abs(chi_residual(ctx, p, GOLDEN_RATIO)) < 1e-12

    with pytest.raises(ValueError):
        chi_residual(ctx, p, 0.0)


def test_solve_chi():
    """
    Ensure that the fixed point is found for reference cases.
    """
    ctx, p = unit_case()
    assert solve_chi(ctx, np.zeros(1)).chi == 1.0
    solution = solve_chi(ctx, p)
    assert solution.chi == pytest.approx(GOLDEN_RATIO, abs=1e-9)
    assert solution.x == pytest.approx(np.log(GOLDEN_RATIO))
    assert solution.residual <= 1e-10


def test_solve_chi_random():
    """
    Ensure that the fixed point is bracketed by [1, 1 + sum(a)] and solved
    to the required accuracy for random inputs.
    """
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        ctx, p = random_case(rng)
        upper = 1.0 + np.sum(p * ctx.snr_slopes)
        assert chi_residual(ctx, p, 1.0) <= 0.0
        assert chi_residual(ctx, p, upper) > 0.0
        solution = solve_chi(ctx, p)
        assert 1.0 <= solution.chi <= upper
        assert solution.residual <= 1e-10
        assert abs(chi_residual(ctx, p, solution.chi)) <= 1e-10


def test_solve_chi_high_snr():
    """
    Ensure that the fixed point is found when it exceeds 1 + N, which
    happens at high SNR.
    """
    snr = 1e10
    ctx = PairContext(gains_sq=[1.0], denom=1.0, n_antennas=1)
    expected = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * snr))
    assert solve_chi(ctx, [snr]).chi == pytest.approx(expected, rel=1e-10)

    ctx = PairContext(gains_sq=np.ones(4), denom=4e-11, n_antennas=4)
    p = np.full(4, 0.25)
    solution = solve_chi(ctx, p)
    assert solution.chi > 5.0
    assert abs(dy_dx(ctx, p, solution.x)) <= 1e-8 * ctx.n_antennas
    assert upsilon(ctx, p) == pytest.approx(upsilon_direct(ctx, p), rel=1e-9)
    assert upsilon_batch(ctx, p[None])[0] == pytest.approx(upsilon(ctx, p), rel=1e-9)


def test_solve_chi_batch():
    """
    Ensure that the vectorized solver agrees with the scalar one.
    """
    rng = np.random.default_rng(1)
    ctx, _ = random_case(rng, n_bs=3)
    powers = 10 ** rng.uniform(-2, 1, size=(50, 3))
    powers[0] = 0.0
    chi = solve_chi_batch(ctx, powers)
    expected = [solve_chi(ctx, p).chi for p in powers]
    assert np.allclose(chi, expected, rtol=0, atol=1e-11)
    assert chi[0] == 1.0


def test_y_value():
    """
    Ensure that y takes the expected values in reference cases.
    """
    ctx = PairContext(gains_sq=[1.0, 1.0], denom=1.0, n_antennas=3)
    assert y_value(ctx, np.zeros(2), 0.0) == pytest.approx(3 * LOG2E)
    assert y_value(ctx, np.zeros(2), 1.0) == pytest.approx(
        3 * LOG2E * (1.0 + np.exp(-1.0))
    )

    ctx, p = unit_case()
    expected = np.log2(1.0 + 1.0 / GOLDEN_RATIO) + LOG2E * (
        np.log(GOLDEN_RATIO) + 1.0 / GOLDEN_RATIO
    )
    assert y_value(ctx, p, np.log(GOLDEN_RATIO)) == pytest.approx(expected)
    assert expected == pytest.approx(2.2800, abs=1e-3)


def test_derivatives():
    """
    Ensure that the derivatives of y match finite differences and that y
    is convex in x.
    """
    ctx = PairContext(gains_sq=[1.0], denom=1.0, n_antennas=2)
    assert dy_dx(ctx, np.zeros(1), 0.0) == 0.0

    rng = np.random.default_rng(2)
    step = 1e-6
    # y reaches about 100 here, so its differences lose about 1e-8 to
    # rounding at a step of 1e-6. The first derivative uses a larger step.
    step_y = 1e-5
    for _ in range(1_000):
        ctx, p = random_case(rng)
        x = rng.uniform(0.0, 5.0)
        fd_1 = (y_value(ctx, p, x + step_y) - y_value(ctx, p, x - step_y)) / (2 * step_y)
        assert dy_dx(ctx, p, x) == pytest.approx(fd_1, rel=1e-6, abs=1e-8)
        fd_2 = (dy_dx(ctx, p, x + step) - dy_dx(ctx, p, x - step)) / (2 * step)
        assert d2y_dx2(ctx, p, x) == pytest.approx(fd_2, rel=1e-6, abs=1e-9)
        assert d2y_dx2(ctx, p, x) > 0.0


def test_power_gradient():
    """
    Ensure that the gradient with respect to the powers matches finite
    differences.
    """
    rng = np.random.default_rng(3)
    for _ in range(100):
        ctx, p = random_case(rng)
        x = rng.uniform(0.0, 3.0)
        grad = dy_dp(ctx, p, x)
        for ind in range(ctx.n_bs):
            step = 1e-6 * p[ind]
            p_r = p.copy()
            p_r[ind] += step
            p_l = p.copy()
            p_l[ind] -= step
            fd = (y_value(ctx, p_r, x) - y_value(ctx, p_l, x)) / (2 * step)
            assert grad[ind] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_stationarity():
    """
    Ensure that dy/dx vanishes at x = ln(chi) and that this is the
    minimum of y.
    """
    rng = np.random.default_rng(4)
    for _ in range(100):
        ctx, p = random_case(rng)
        x_star, y_min = inner_min_x(ctx, p)
        assert abs(dy_dx(ctx, p, x_star)) <= 1e-8
        grid = np.linspace(0.0, 10.0, 1_000)
        values = [y_value(ctx, p, x) for x in grid]
        assert np.min(values) >= y_min - 1e-6

    ctx, _ = random_case(rng)
    x_star, y_min = inner_min_x(ctx, np.zeros(ctx.n_bs))
    assert x_star == 0.0
    assert y_min == pytest.approx(ctx.n_antennas * LOG2E)

    ctx, p = unit_case()
    x_star, _ = inner_min_x(ctx, p)
    assert x_star == pytest.approx(0.4812, abs=1e-4)


def test_upsilon():
    """
    Ensure that the deterministic-equivalent rate takes the expected
    values in reference cases.
    """
    ctx, p = unit_case()
    assert upsilon(ctx, np.zeros(1)) == 0.0
    assert upsilon(ctx, p) == pytest.approx(0.8373, abs=1e-3)

    x_star, y_min = inner_min_x(ctx, p)
    assert upsilon(ctx, p) == pytest.approx(y_min - LOG2E, rel=1e-12)


def test_upsilon_consistency():
    """
    Ensure that the min-form and the three-term form of the rate agree
    and that the batched evaluation matches the scalar one.
    """
    rng = np.random.default_rng(5)
    for _ in range(1_000):
        ctx, p = random_case(rng)
        assert upsilon(ctx, p) == pytest.approx(upsilon_direct(ctx, p), rel=1e-9)

    ctx, _ = random_case(rng, n_bs=2)
    powers = 10 ** rng.uniform(-2, 1, size=(20, 2))
    batch = upsilon_batch(ctx, powers)
    expected = [upsilon(ctx, p) for p in powers]
    assert np.allclose(batch, expected, rtol=1e-9, atol=1e-12)


def test_concavity_in_power():
    """
    Ensure that y is midpoint concave in the powers for fixed x.
    """
    rng = np.random.default_rng(6)
    for _ in range(500):
        ctx, p_1 = random_case(rng, n_bs=3)
        p_2 = 10 ** rng.uniform(-2, 1, size=3)
        x = rng.uniform(0.0, 3.0)
        mid = y_value(ctx, 0.5 * (p_1 + p_2), x)
        avg = 0.5 * (y_value(ctx, p_1, x) + y_value(ctx, p_2, x))
        assert mid >= avg - 1e-9


def test_monotonicity():
    """
    Ensure that the rate does not decrease when the power of any BS
    increases.
    """
    rng = np.random.default_rng(7)
    for _ in range(500):
        ctx, p = random_case(rng)
        ind = int(rng.integers(ctx.n_bs))
        p_more = p.copy()
        p_more[ind] *= rng.uniform(1.0, 10.0)
        assert upsilon(ctx, p_more) >= upsilon(ctx, p) - 1e-12


def test_scale_invariance():
    """
    Ensure that chi and the rate only depend on the ratios p g / D.
    """
    rng = np.random.default_rng(8)
    for _ in range(100):
        ctx, p = random_case(rng)
        scale = 10 ** rng.uniform(-5, 5)
        scaled = PairContext(
            gains_sq=ctx.gains_sq * scale,
            denom=ctx.denom * scale,
            n_antennas=ctx.n_antennas,
        )
        assert solve_chi(scaled, p).chi == pytest.approx(solve_chi(ctx, p).chi, rel=1e-10)
        assert upsilon(scaled, p) == pytest.approx(upsilon(ctx, p), rel=1e-10)


def test_accuracy_against_monte_carlo():
    """
    Ensure that the deterministic-equivalent rate is within 5% of the
    Monte Carlo estimate of the ergodic rate for M = N = 4.
    """
    ctx = PairContext(gains_sq=[1.0, 0.5, 0.2, 0.1], denom=1.0, n_antennas=4)
    p = np.ones(4)
    estimate = ergodic_rate_mc(ctx, p, 100_000, np.random.default_rng(9))
    assert upsilon(ctx, p) == pytest.approx(estimate.mean, rel=0.05)


def test_invalid_power():
    """
    Ensure that negative or mis-shaped powers are rejected.
    """
    ctx, _ = unit_case()
    with pytest.raises(ValueError):
        solve_chi(ctx, np.array([-1.0]))
    with pytest.raises(ValueError):
        upsilon(ctx, np.ones(2))
