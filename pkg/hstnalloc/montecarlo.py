"""
hstnalloc.montecarlo
====================

Monte Carlo reference for the deterministic-equivalent rate model.

Small-scale fading is drawn as i.i.d. circularly-symmetric complex Gaussian
with unit variance per entry, so that all path gain resides in the
large-scale amplitudes. Ergodic rates and the expected leakage are estimated
as sample means over independent fading realizations.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg as la
from scipy.special import exp1

from hstnalloc.rate_model import LOG2E, check_power

LOGGER = logging.getLogger(__name__)

#: Default number of samples for rate estimates.
RATE_SAMPLES = 100_000
#: Default number of samples for leakage estimates.
LEAKAGE_SAMPLES = 10_000
#: Number of fading realizations processed at once.
CHUNK_SIZE = 10_000


@dataclass(frozen=True)
class McEstimate:
    """
    A Monte Carlo estimate.

    Attributes:
        mean: The sample mean.
        std_error: The standard error of the mean.
        n_samples: The number of samples.
    """

    mean: float
    std_error: float
    n_samples: int

    @property
    def variance(self):
        """The sample variance recovered from the standard error."""
        return self.std_error ** 2 * self.n_samples


def sample_small_scale(rows, cols, rng, size=None):
    """
    Draw small-scale Rayleigh fading coefficients.

    Real and imaginary parts are independent zero-mean Gaussians with
    variance 1/2.

    Args:
        rows: The number of rows.
        cols: The number of columns.
        rng: A numpy Generator.
        size: Optional number of independent matrices to draw at once.

    Return:
        A complex array of shape ``(rows, cols)`` or ``(size, rows, cols)``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("'rows' and 'cols' must be at least 1.")
    shape = (rows, cols) if size is None else (size, rows, cols)
    real = rng.standard_normal(shape)
    imag = rng.standard_normal(shape)
    return (real + 1j * imag) / np.sqrt(2.0)


def logdet2_hermitian(a):
    """
    Base-2 logarithm of the determinant of a Hermitian positive-definite
    matrix computed from its Cholesky factor.

    Args:
        a: A Hermitian positive-definite matrix.

    Return:
        ``log2(det(a))``

    Raises:
        numpy.linalg.LinAlgError if 'a' is not Hermitian positive definite.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise np.linalg.LinAlgError("Log-determinant requires a square matrix.")
    if not np.allclose(a, a.conj().T, rtol=1e-10, atol=1e-12):
        raise np.linalg.LinAlgError("Matrix is not Hermitian.")
    try:
        factor = la.cholesky(a, lower=True)
    except la.LinAlgError as error:
        raise np.linalg.LinAlgError(
            f"Matrix is not positive definite: {error}"
        ) from error
    return float(2.0 * LOG2E * np.sum(np.log(np.real(np.diag(factor)))))


def _batched_logdet2(a):
    """log2 det of a stack of Hermitian positive-definite matrices."""
    factor = np.linalg.cholesky(a)
    diag = np.real(np.diagonal(factor, axis1=-2, axis2=-1))
    return 2.0 * LOG2E * np.sum(np.log(diag), axis=-1)


def _gram(s, ctx, p):
    """I + H P H^H / D for one or many small-scale matrices s."""
    scale = np.sqrt(ctx.gains_sq * p / ctx.denom)
    h = s * scale
    m = ctx.n_antennas
    return np.eye(m) + h @ np.swapaxes(h.conj(), -1, -2)


def instantaneous_rate(s, ctx, p):
    """
    Rate of a single small-scale fading realization.

    Args:
        s: Complex small-scale fading matrix of shape (M, N).
        ctx: The PairContext.
        p: The per-BS powers in mW.

    Return:
        ``log2 det(I + H P H^H / D)`` with ``H = S diag(l)`` in bit/s/Hz.
    """
    s = np.asarray(s)
    expected = (ctx.n_antennas, ctx.n_bs)
    if s.shape != expected:
        raise ValueError(
            f"Small-scale fading must have shape {expected}, not {s.shape}."
        )
    p = check_power(p, ctx.n_bs)
    return logdet2_hermitian(_gram(s, ctx, p))


def _combine(shards):
    """
    Combine (n, mean, variance) tuples of independent shards into a single
    McEstimate.
    """
    n_total = sum(n for n, _, _ in shards)
    mean = sum(n * shard_mean for n, shard_mean, _ in shards) / n_total
    if n_total < 2:
        return McEstimate(mean=float(mean), std_error=0.0, n_samples=n_total)
    sum_sq = sum(
        (n - 1) * var + n * (shard_mean - mean) ** 2 for n, shard_mean, var in shards
    )
    variance = sum_sq / (n_total - 1)
    return McEstimate(
        mean=float(mean),
        std_error=float(np.sqrt(variance / n_total)),
        n_samples=n_total,
    )


def _moments(values):
    n = values.size
    var = float(np.var(values, ddof=1)) if n > 1 else 0.0
    return n, float(np.mean(values)), var


def _rate_samples(ctx, p, n_samples, rng):
    samples = []
    remaining = n_samples
    while remaining > 0:
        size = min(remaining, CHUNK_SIZE)
        s = sample_small_scale(ctx.n_antennas, ctx.n_bs, rng, size=size)
        samples.append(_batched_logdet2(_gram(s, ctx, p)))
        remaining -= size
    return np.concatenate(samples)


def _split(n_samples, n_workers):
    base, extra = divmod(n_samples, n_workers)
    sizes = [base + 1] * extra + [base] * (n_workers - extra)
    return [size for size in sizes if size > 0]


def _sharded(sampler, n_samples, rng, n_workers):
    if n_workers <= 1:
        return _combine([_moments(sampler(n_samples, rng))])
    sizes = _split(n_samples, n_workers)
    seeds = np.random.SeedSequence(int(rng.integers(2 ** 63))).spawn(len(sizes))
    streams = [np.random.default_rng(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=len(sizes)) as pool:
        shards = list(
            pool.map(lambda args: _moments(sampler(*args)), zip(sizes, streams))
        )
    return _combine(shards)


def ergodic_rate_mc(ctx, p, n_samples=RATE_SAMPLES, rng=None, n_workers=1):
    """
    Monte Carlo estimate of the ergodic rate of a pair.

    Args:
        ctx: The PairContext.
        p: The per-BS powers in mW.
        n_samples: The number of fading realizations.
        rng: A numpy Generator. A fresh unseeded one is used if not given.
        n_workers: Number of threads to shard the sampling over. Results
            are bit-identical across runs only for a single worker.

    Return:
        An McEstimate of the rate in bit/s/Hz.
    """
    if n_samples < 1:
        raise ValueError("'n_samples' must be at least 1.")
    p = check_power(p, ctx.n_bs)
    if not np.any(p * ctx.gains_sq > 0):
        return McEstimate(mean=0.0, std_error=0.0, n_samples=n_samples)
    if rng is None:
        rng = np.random.default_rng()

    def sampler(size, stream):
        return _rate_samples(ctx, p, size, stream)

    estimate = _sharded(sampler, n_samples, rng, n_workers)
    LOGGER.debug(
        "MC rate estimate %.5f +/- %.2g from %s samples.",
        estimate.mean,
        estimate.std_error,
        n_samples,
    )
    return estimate


def ergodic_leakage_mc(c, p, n_samples=LEAKAGE_SAMPLES, rng=None, n_workers=1):
    """
    Monte Carlo estimate of the expected leakage at the satellite MT.

    Args:
        c: The PowerConstraints holding the leakage coefficients.
        p: The per-BS powers in mW.
        n_samples: The number of fading realizations.
        rng: A numpy Generator. A fresh unseeded one is used if not given.
        n_workers: Number of threads to shard the sampling over.

    Return:
        An McEstimate of the leakage in mW.
    """
    if n_samples < 1:
        raise ValueError("'n_samples' must be at least 1.")
    n = c.leak_coeff.size
    p = check_power(p, n)
    if rng is None:
        rng = np.random.default_rng()

    def sampler(size, stream):
        s = sample_small_scale(1, n, stream, size=size)[:, 0, :]
        return np.abs(s) ** 2 @ (c.leak_coeff * p)

    return _sharded(sampler, n_samples, rng, n_workers)


def exact_siso_ergodic_rate(snr):
    """
    Closed-form ergodic rate of a single-antenna Rayleigh link,
    ``E[log2(1 + snr |s|^2)] = exp(1/snr) E1(1/snr) log2(e)``.

    Args:
        snr: The mean SNR in linear scale.
    """
    if snr <= 0:
        return 0.0
    return float(np.exp(1.0 / snr) * exp1(1.0 / snr) * LOG2E)
