"""State estimators: fixed-gain observers, their ball-truncated variant,
the exact Kalman filter for linear signals, and a bootstrap particle filter.

The fixed-gain observer follows ``z' = (I - D P) Psi(z) + D y``. Truncation
composes that update with the metric projection onto a ball in a chosen
quadratic norm, which bounds the estimator against noise outliers without
touching its behaviour in the ordinary regime.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np


class FilterNumericsError(RuntimeError):
    """Raised when a filter update is numerically impossible (singular innovation)."""


# ---------------------------------------------------------------------------
# quadratic norms


class VNorm:
    """Quadratic form V with V(x)^(1/2) a Hilbert norm.

    Kinds:
      * ``euclidean-plus-observed`` -- V(u) = |P u|^2 + |u|^2,
      * ``h1`` -- squared Sobolev norm on spectral coefficients,
      * ``quadratic`` -- V(x) = x^T S x for a symmetric positive definite S.
    """

    def __init__(self, kind, weights=None, matrix=None, theta=1.0):
        self.kind = kind
        self.weights = weights
        self.matrix = matrix
        self.theta = float(theta)

    @classmethod
    def euclidean_plus_observed(cls, projection):
        w = np.ones(projection.dim)
        w[projection.observed] = 2.0
        return cls("euclidean-plus-observed", weights=w, theta=1.0)

    @classmethod
    def h1(cls, grid):
        # complex representative coefficients count twice (the +/-k pair)
        return cls("h1", weights=2.0 * grid.k2_reps, theta=1.0)

    @classmethod
    def quadratic(cls, S):
        S = np.asarray(S, dtype=float)
        S = 0.5 * (S + S.T)
        theta = float(np.linalg.eigvalsh(S)[0])
        if theta <= 0:
            raise ValueError("quadratic form must be positive definite")
        return cls("quadratic", matrix=S, theta=theta)

    def value(self, x):
        if self.matrix is not None:
            return float(np.real(x @ self.matrix @ x))
        return float(np.sum(self.weights * np.abs(x) ** 2))

    def norm(self, x):
        return float(np.sqrt(self.value(x)))

    def inner(self, x, y):
        if self.matrix is not None:
            return float(np.real(x @ self.matrix @ y))
        return float(np.real(np.sum(self.weights * x * np.conj(y))))


def project_ball_V(vnorm: VNorm, radius, x):
    """Closest point of the ball {V(u)^(1/2) <= radius} in the V norm."""
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    size = vnorm.norm(x)
    if size <= radius:
        return np.asarray(x).copy()
    return np.asarray(x) * (radius / size)


# ---------------------------------------------------------------------------
# gains


class Gain:
    """Linear gain applied to observations (annihilates the unobserved part)."""

    def __init__(self, kind, projection=None, matrix=None):
        self.kind = kind
        self.projection = projection
        self._matrix = matrix

    @classmethod
    def identity_on_observed(cls, projection):
        return cls("identity-on-observed", projection=projection)

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def from_matrix(cls, matrix, kind="matrix"):
        return cls(kind, matrix=np.asarray(matrix, dtype=float))

    def apply(self, x):
        if self.kind == "identity-on-observed":
            return self.projection.apply(x)
        if self.kind == "zero":
            return np.zeros_like(x)
        return self._matrix @ x


# ---------------------------------------------------------------------------
# observer updates


def _check_observation(projection, y):
    rem = projection.complement(y)
    if np.any(rem != 0):
        raise ValueError("observation has energy outside the observed subspace")


def observer_step(model, projection, gain, z, y_next, h):
    """One fixed-gain update z' = (I - D P) Psi(z) + D y."""
    _check_observation(projection, y_next)
    fz = model.step(z, h)
    return fz - gain.apply(projection.apply(fz)) + gain.apply(y_next)


def truncated_observer_step(model, projection, gain, vnorm, radius, m, y_next, h):
    """Observer update followed by metric projection onto the V-ball."""
    return project_ball_V(vnorm, radius, observer_step(model, projection, gain, m, y_next, h))


def default_ball_radius(model, vnorm=None) -> float:
    """Default truncation radius: sqrt(2) * r for the finite-dimensional
    models (r the dissipation ball radius), the dissipation ball itself for
    spectral models (their ambient norm is already the V norm)."""
    from .dynamics import absorbing_radius

    r = absorbing_radius(model)
    if vnorm is not None and vnorm.kind == "h1":
        return r
    return float(np.sqrt(2.0) * r)


# ---------------------------------------------------------------------------
# filter runs


@dataclass
class FilterRun:
    """Per-step output of one estimator on one observation sequence."""

    kind: str
    estimates: np.ndarray
    sq_errors: Optional[np.ndarray] = None
    ess: Optional[np.ndarray] = None
    post_trace: Optional[np.ndarray] = None
    cov_traces: Optional[np.ndarray] = None
    degenerate_at: Optional[int] = None

    @property
    def final_sq_error(self):
        return None if self.sq_errors is None else float(self.sq_errors[-1])


def _sq_norm(model, x):
    if hasattr(model, "grid"):
        return model.grid.h1_norm2(x)
    x = np.asarray(x)
    return float(np.real(np.sum(x * np.conj(x))))


def run_observer(
    model,
    projection,
    gain,
    z0,
    observations,
    vnorm: Optional[VNorm] = None,
    radius=None,
    truth=None,
) -> FilterRun:
    """Drive the (possibly truncated) observer through an observation sequence."""
    truncate = vnorm is not None
    if truncate and radius is None:
        radius = default_ball_radius(model, vnorm)
    z = np.asarray(z0).copy()
    J = observations.n_steps
    h = observations.h
    estimates = np.empty((J + 1,) + z.shape, dtype=z.dtype)
    estimates[0] = z
    for j in range(J):
        if truncate:
            z = truncated_observer_step(
                model, projection, gain, vnorm, radius, z, observations.ys[j], h
            )
        else:
            z = observer_step(model, projection, gain, z, observations.ys[j], h)
        estimates[j + 1] = z
    kind = "truncated-observer" if truncate else "observer"
    run = FilterRun(kind=kind, estimates=estimates)
    if truth is not None:
        run.sq_errors = np.array(
            [_sq_norm(model, truth[j] - estimates[j]) for j in range(J + 1)]
        )
    return run


# ---------------------------------------------------------------------------
# Kalman filtering for linear signals


def _observed_solve(projection, S_full, rhs_cols, eps_label="innovation"):
    obs = projection.observed
    S = S_full[np.ix_(obs, obs)]
    try:
        sol = np.linalg.solve(S, rhs_cols[:, obs].T).T
    except np.linalg.LinAlgError as exc:
        raise FilterNumericsError(f"singular {eps_label} covariance") from exc
    if not np.isfinite(sol).all():
        raise FilterNumericsError(f"singular {eps_label} covariance")
    return sol


def kalman_gain_3dvar(model_cov, projection, gamma, eps) -> Gain:
    """Fixed gain K = C P^T (P C P^T + eps^2 Gamma)^-1 on the observed block."""
    C = np.asarray(model_cov, dtype=float)
    d = C.shape[0]
    gamma = np.asarray(gamma, dtype=float)
    S_full = projection.matrix() @ C @ projection.matrix() + eps**2 * gamma
    sol = _observed_solve(projection, S_full, C)
    K = np.zeros((d, d))
    K[:, projection.observed] = sol
    return Gain.from_matrix(K, kind="kalman-gain")


def kalman_filter_step(L, projection, gamma, eps, mean, cov, y_next):
    """One predict/update cycle for the linear signal v' = L v.

    The covariance update uses the Joseph form, which matches the textbook
    information-form recursion whenever the latter is defined but also
    tolerates singular covariances (e.g. a deterministic start).
    """
    _check_observation(projection, y_next)
    L = np.asarray(L, dtype=float)
    d = L.shape[0]
    gamma = np.asarray(gamma, dtype=float)
    pred_cov = L @ cov @ L.T
    Pmat = projection.matrix()
    S_full = Pmat @ pred_cov @ Pmat + eps**2 * gamma
    sol = _observed_solve(projection, S_full, pred_cov)
    K = np.zeros((d, d))
    K[:, projection.observed] = sol
    IKP = np.eye(d) - K @ Pmat
    new_mean = IKP @ (L @ mean) + K @ y_next
    new_cov = IKP @ pred_cov @ IKP.T + eps**2 * (K @ gamma @ K.T)
    new_cov = 0.5 * (new_cov + new_cov.T)
    return new_mean, new_cov


def run_kalman(L, projection, gamma, eps, mean0, cov0, observations, truth=None) -> FilterRun:
    """Exact Gaussian filtering for the linear signal; also records trace C_j."""
    mean = np.asarray(mean0, dtype=float).copy()
    cov = np.asarray(cov0, dtype=float).copy()
    J = observations.n_steps
    means = np.empty((J + 1, mean.shape[0]))
    traces = np.empty(J + 1)
    means[0], traces[0] = mean, np.trace(cov)
    for j in range(J):
        mean, cov = kalman_filter_step(
            L, projection, gamma, eps, mean, cov, observations.ys[j]
        )
        means[j + 1], traces[j + 1] = mean, np.trace(cov)
    run = FilterRun(kind="kalman", estimates=means, cov_traces=traces)
    if truth is not None:
        run.sq_errors = np.array(
            [float(np.sum((truth[j] - means[j]) ** 2)) for j in range(J + 1)]
        )
    return run


# ---------------------------------------------------------------------------
# bootstrap particle filter


def systematic_resample(rng, weights):
    """Systematic resampling: one uniform draw, N evenly spaced pointers."""
    n = weights.shape[0]
    positions = (rng.uniform() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions).clip(0, n - 1)


def particle_filter(
    model,
    projection,
    noise,
    eps,
    n_particles,
    init_sampler,
    observations,
    rng,
    resample_threshold=0.5,
    jitter=0.0,
    truth=None,
) -> FilterRun:
    """Bootstrap filter: propagate through the signal map, reweight by the
    observation likelihood, resample when the effective sample size halves.

    The dynamics are deterministic, so no process jitter is added by
    default; ``jitter`` > 0 enables an optional Gaussian perturbation for
    degeneracy studies (not part of the modelled system).
    """
    if eps <= 0:
        raise ValueError("particle filter requires eps > 0")
    if n_particles < 2:
        raise ValueError("need at least two particles")
    J = observations.n_steps
    h = observations.h
    particles = init_sampler(rng, n_particles)
    logw = np.zeros(n_particles)
    dim = particles.shape[1]
    means = np.empty((J + 1, dim), dtype=particles.dtype)
    post_trace = np.empty(J + 1)
    ess_hist = np.empty(J + 1)
    means[0] = particles.mean(axis=0)
    post_trace[0] = float(
        np.mean(np.sum(np.abs(particles - means[0]) ** 2, axis=1))
    )
    ess_hist[0] = n_particles
    degenerate_at = None
    for j in range(J):
        particles = model.step_batch(particles, h)
        if jitter > 0:
            particles = particles + jitter * rng.standard_normal(particles.shape)
        resid = observations.ys[j] - projection.apply(particles)
        logw = logw + noise.log_density(resid, eps)
        shift = logw.max()
        if not np.isfinite(shift):
            degenerate_at = j + 1
            means[j + 1 :] = means[j]
            post_trace[j + 1 :] = post_trace[j]
            ess_hist[j + 1 :] = 0.0
            break
        w = np.exp(logw - shift)
        w /= w.sum()
        mean = w @ particles
        means[j + 1] = mean
        post_trace[j + 1] = float(
            np.real(w @ np.sum(np.abs(particles - mean) ** 2, axis=1))
        )
        ess = 1.0 / float(w @ w)
        ess_hist[j + 1] = ess
        if ess < resample_threshold * n_particles:
            idx = systematic_resample(rng, w)
            particles = particles[idx]
            logw = np.zeros(n_particles)
    run = FilterRun(
        kind="particle",
        estimates=means,
        ess=ess_hist,
        post_trace=post_trace,
        degenerate_at=degenerate_at,
    )
    if truth is not None:
        run.sq_errors = np.array(
            [_sq_norm(model, truth[j] - means[j]) for j in range(J + 1)]
        )
    return run


# ---------------------------------------------------------------------------
# CSV export


def export_filter_run(run: FilterRun, path):
    """Write per-step estimates (and squared errors / ESS when available)."""
    est = run.estimates
    is_complex = np.iscomplexobj(est)
    dim = est.shape[1]
    if is_complex:
        cols = [f"m{i}{p}" for i in range(dim) for p in ("r", "i")]
    else:
        cols = [f"m{i}" for i in range(dim)]
    header = ["j"] + cols
    if run.sq_errors is not None:
        header.append("sq_error")
    if run.ess is not None:
        header.append("ess")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(est.shape[0]):
            if is_complex:
                vals = []
                for i in range(dim):
                    vals += [
                        format(est[j, i].real, ".17g"),
                        format(est[j, i].imag, ".17g"),
                    ]
            else:
                vals = [format(v, ".17g") for v in est[j]]
            row = [j] + vals
            if run.sq_errors is not None:
                row.append(format(run.sq_errors[j], ".17g"))
            if run.ess is not None:
                row.append(format(run.ess[j], ".17g"))
            writer.writerow(row)
