"""Gaussian models and the optimal-coupling experiment.

A flow trained with the standard-normal NLL pushes the data law onto
N(0, I). When the map is the gradient of a convex function, achieving the
pushforward already makes it the optimal (least squared displacement)
transport, so the interesting comparisons are closed form: the
Bures-Wasserstein cost between the data Gaussian and N(0, I) is the
oracle optimum, the data entropy is the NLL floor, and the Cholesky
whitening map is an exact normalizer whose cost is provably suboptimal
unless the covariance is already diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, DimensionMismatch, InvalidSpec, NotPositiveDefinite
from .linalg import cholesky, logdet_pd, solve_lower, sqrt_psd
from .models import forward, init_params
from .seeding import STREAM_DATA, STREAM_GAUSSIAN, STREAM_TEST, substream
from .training import LOG_2PI, TrainReport, flow_nll, train


@dataclass(frozen=True)
class GaussianModel:
    """Mean, PD covariance and its cached Cholesky factor."""

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray

    @property
    def d(self):
        return self.mean.shape[0]


def gaussian_from_moments(mean, covariance):
    mean = np.asarray(mean, dtype=np.float64)
    covariance = np.asarray(covariance, dtype=np.float64)
    if mean.ndim != 1 or covariance.shape != (mean.shape[0], mean.shape[0]):
        raise DimensionMismatch(
            f"mean {mean.shape} incompatible with covariance {covariance.shape}"
        )
    low = cholesky(covariance)
    g = GaussianModel(mean.copy(), covariance.copy(), low)
    g.mean.setflags(write=False)
    g.covariance.setflags(write=False)
    g.chol.setflags(write=False)
    return g


def fit_gaussian(samples):
    """Sample mean and unbiased covariance with a 1e-6 * trace/d ridge.

    Raises DegenerateData when the ridged covariance is still not PD
    (e.g. all samples equal).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateData(f"need at least 2 samples, got shape {x.shape}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    d = x.shape[1]
    cov = cov + (1e-6 * np.trace(cov) / d) * np.eye(d)
    try:
        return gaussian_from_moments(mean, cov)
    except NotPositiveDefinite as e:
        raise DegenerateData(f"covariance not positive definite: {e}") from None


def standard_gaussian(d):
    return gaussian_from_moments(np.zeros(d), np.eye(d))


def gaussian_sample(g, count, seed):
    """count draws; seed is an int (keys a dedicated stream) or a Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, STREAM_GAUSSIAN)
    z = rng.standard_normal((count, g.d))
    return g.mean + z @ g.chol.T


def whitening_map(g, x):
    """Exact normalizer x -> L^-1 (x - mean) via triangular solve."""
    x = np.asarray(x, dtype=np.float64)
    return solve_lower(g.chol, x - g.mean)


def gaussian_entropy(g):
    """Differential entropy in nats: the NLL floor for any normalizing map."""
    return 0.5 * g.d * (1.0 + LOG_2PI) + 0.5 * logdet_pd(g.covariance)


def whitening_expected_cost(g):
    """Closed form of E ||x - L^-1 (x - mean)||^2 under g.

    Expands to ||mean||^2 + tr(Sigma) - 2 tr(L) + d; always at least the
    optimal transport cost to N(0, I), with equality only when L is
    symmetric (i.e. Sigma diagonal).
    """
    mu = g.mean
    return float(mu @ mu + np.trace(g.covariance) - 2.0 * np.trace(g.chol) + g.d)


def bures_wasserstein_cost(p, q):
    """Squared Wasserstein-2 distance between two Gaussians."""
    if p.d != q.d:
        raise DimensionMismatch(f"dimension mismatch {p.d} != {q.d}")
    root_q = sqrt_psd(q.covariance)
    cross = sqrt_psd(root_q @ p.covariance @ root_q)
    gap = p.mean - q.mean
    value = float(gap @ gap + np.trace(p.covariance) + np.trace(q.covariance) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def gaussian_kl(p, q):
    """KL(p || q) between Gaussians, trace/logdet closed form."""
    if p.d != q.d:
        raise DimensionMismatch(f"dimension mismatch {p.d} != {q.d}")
    half = solve_lower(q.chol, p.chol.T).T  # columns of L_p through L_q^-1
    frob = float(np.sum(half * half))
    u = solve_lower(q.chol, p.mean - q.mean)
    quad = float(u @ u)
    ld_p = 2.0 * float(np.sum(np.log(np.diag(p.chol))))
    ld_q = 2.0 * float(np.sum(np.log(np.diag(q.chol))))
    return 0.5 * (frob + quad - p.d + ld_q - ld_p)


def random_gaussian(d, seed, eig_range=(0.5, 2.5), mean_scale=1.0):
    """Seeded correlated Gaussian for experiments.

    Covariance is a random Givens-rotation conjugation of a uniform
    spectrum in eig_range, so off-diagonal structure is essentially
    guaranteed; the mean is uniform in [-mean_scale, mean_scale]^d.
    """
    rng = substream(seed, STREAM_GAUSSIAN, 9)
    eigs = rng.uniform(eig_range[0], eig_range[1], size=d)
    q = np.eye(d)
    for p_idx in range(d - 1):
        for q_idx in range(p_idx + 1, d):
            ang = rng.uniform(0.0, 2.0 * math.pi)
            c, s = math.cos(ang), math.sin(ang)
            rot_p = c * q[:, p_idx] - s * q[:, q_idx]
            rot_q = s * q[:, p_idx] + c * q[:, q_idx]
            q[:, p_idx], q[:, q_idx] = rot_p, rot_q
    cov = (q * eigs) @ q.T
    cov = 0.5 * (cov + cov.T)
    mean = rng.uniform(-mean_scale, mean_scale, size=d)
    return gaussian_from_moments(mean, cov)


class GaussianSampler:
    """Fresh Gaussian draws every step (infinite data stream)."""

    def __init__(self, gaussian, seed, batch_size, samples_per_epoch):
        self.gaussian = gaussian
        self.seed = seed
        self.batch_size = batch_size
        self.steps_per_epoch = max(1, samples_per_epoch // batch_size)

    def batch(self, epoch, step):
        rng = substream(self.seed, STREAM_DATA, epoch, step)
        return gaussian_sample(self.gaussian, self.batch_size, rng), None


@dataclass
class CouplingReport:
    method: str
    d: int
    nll: float
    cost: float
    optimal_cost: float
    entropy_bound: float
    seed: int

    def row(self):
        return (
            self.method,
            self.d,
            float(self.nll),
            float(self.cost),
            float(self.optimal_cost),
            float(self.entropy_bound),
            self.seed,
        )


COUPLING_CSV_HEADER = ("method", "d", "nll", "cost", "optimal_cost", "entropy_bound", "seed")


def _mean_sq_displacement(x, y):
    diff = x - y
    return float(np.mean(np.sum(diff * diff, axis=-1)))


def run_coupling(model_spec, data, train_cfg, *, train_samples, test_samples, seed):
    """Train a flow on data and score it on a held-out test set.

    Returns (CouplingReport, trained model, TrainReport). The test stream
    is shared with whitening_report so every method sees the same points.
    """
    if not model_spec.gamma > 0:
        raise InvalidSpec("coupling flows need gamma > 0 so the map is invertible")
    model = init_params(model_spec, seed)
    sampler = GaussianSampler(data, seed, train_cfg.batch_size, train_samples)
    trained, treport = train(model, sampler, train_cfg)
    x_test = gaussian_sample(data, test_samples, substream(seed, STREAM_TEST))
    nll = float(flow_nll(trained, x_test))
    mapped = forward(trained, x_test)
    report = CouplingReport(
        method=model_spec.arch,
        d=data.d,
        nll=nll,
        cost=_mean_sq_displacement(x_test, mapped),
        optimal_cost=bures_wasserstein_cost(data, standard_gaussian(data.d)),
        entropy_bound=gaussian_entropy(data),
        seed=seed,
    )
    return report, trained, treport


def whitening_report(data, *, test_samples, seed):
    """Score the exact Cholesky whitening map on the shared test stream."""
    x_test = gaussian_sample(data, test_samples, substream(seed, STREAM_TEST))
    z = whitening_map(data, x_test)
    # log det of the constant Jacobian L^-1 is -0.5 log det Sigma
    ld = 0.5 * logdet_pd(data.covariance)
    nll = float(np.mean(0.5 * np.sum(z * z, axis=-1))) + 0.5 * data.d * LOG_2PI + ld
    report = CouplingReport(
        method="whitening",
        d=data.d,
        nll=nll,
        cost=_mean_sq_displacement(x_test, z),
        optimal_cost=bures_wasserstein_cost(data, standard_gaussian(data.d)),
        entropy_bound=gaussian_entropy(data),
        seed=seed,
    )
    return report
