"""Additive squared-exponential GP regression.

Kernel: k(a, b) = sum_d exp(-(a_d - b_d)^2 / (2 theta_d^2)), unit amplitude per
input dimension, plus i.i.d. Gaussian observation noise with variance
``noise_var``.  Hyperparameters are handled in log space
(log theta_1..p, log sigma).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize
from scipy.special import gammaln

from ._rng import keyed_rng
from .errors import DomainError, NumericError, OptimizationError

LOG_2PI = np.log(2.0 * np.pi)
# relative to mean(diag); zero first so well-conditioned matrices are factored exactly
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class Hyperparams:
    lengthscales: tuple
    noise_var: float

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "noise_var", float(self.noise_var))
        vals = np.array(ls + (self.noise_var,))
        if not (np.all(np.isfinite(vals)) and np.all(vals > 0)):
            raise DomainError(f"hyperparameters must be positive and finite: {ls}, {self.noise_var}")

    @property
    def p(self):
        return len(self.lengthscales)

    def to_log(self):
        return np.log(np.r_[self.lengthscales, np.sqrt(self.noise_var)])

    @classmethod
    def from_log(cls, u):
        u = np.asarray(u, dtype=float)
        return cls(tuple(np.exp(u[:-1])), float(np.exp(2.0 * u[-1])))


@dataclass(frozen=True)
class HyperPrior:
    """Independent inverse-gamma priors on each lengthscale and on the noise sd."""

    lengthscale_shape: float = 2.0
    lengthscale_scale: float = 2.0
    noise_sd_shape: float = 1.0
    noise_sd_scale: float = 1.0

    def __post_init__(self):
        if min(self.lengthscale_shape, self.lengthscale_scale,
               self.noise_sd_shape, self.noise_sd_scale) <= 0:
            raise DomainError("inverse-gamma shape and scale must be positive")

    def log_density(self, lengthscales, noise_sd):
        """Log prior density in the natural (theta, sigma) parametrization."""
        ls = np.asarray(lengthscales, dtype=float)
        return (np.sum(_ig_logpdf(ls, self.lengthscale_shape, self.lengthscale_scale), axis=-1)
                + _ig_logpdf(noise_sd, self.noise_sd_shape, self.noise_sd_scale))

    def mode(self, p):
        theta = self.lengthscale_scale / (self.lengthscale_shape + 1.0)
        sd = self.noise_sd_scale / (self.noise_sd_shape + 1.0)
        return Hyperparams((theta,) * p, sd * sd)

    def sample(self, p, size, rng):
        """Draw ``size`` prior samples; returns (lengthscales (size, p), noise_sd (size,))."""
        theta = self.lengthscale_scale / rng.gamma(self.lengthscale_shape, size=(size, p))
        sd = self.noise_sd_scale / rng.gamma(self.noise_sd_shape, size=size)
        return theta, sd


def _ig_logpdf(x, a, b):
    x = np.asarray(x, dtype=float)
    return a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(x) - b / x


@dataclass
class GpPosterior:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def var(self):
        return np.diag(self.cov).copy()


# -- linear algebra -------------------------------------------------------

def jittered_cholesky(A):
    """Lower Cholesky factor of ``A + jitter * mean(diag(A)) * I``.

    A plain factorization is tried first; on failure the jitter starts at
    1e-10 and grows by 10x up to 1e-6 before giving up.  An all-zero matrix
    yields an all-zero factor.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NumericError("matrix has non-finite entries")
    scale = float(np.mean(np.diag(A))) if A.size else 0.0
    if A.size and scale == 0.0 and not np.any(A):
        return np.zeros_like(A)
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    eye = np.eye(A.shape[0])
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(A + (jitter * scale) * eye if jitter else A)
        except np.linalg.LinAlgError:
            pass
    raise NumericError("matrix is not positive definite after jitter escalation")


def batch_jittered_cholesky(A):
    """Cholesky of a stack (B, n, n) with the same jitter policy per matrix."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return A.copy()
    if not np.all(np.isfinite(A)):
        raise NumericError("matrix stack has non-finite entries")
    scale = np.mean(np.diagonal(A, axis1=-2, axis2=-1), axis=-1)
    scale = np.where(np.isfinite(scale) & (scale > 0), scale, 1.0)
    eye = np.eye(A.shape[-1])
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(A + (jitter * scale)[:, None, None] * eye if jitter else A)
        except np.linalg.LinAlgError:
            pass
    # fall back to one matrix at a time so a single bad block is isolated
    return np.stack([jittered_cholesky(a) for a in A])


# -- kernel ---------------------------------------------------------------

def _as_2d(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    return A


def sq_dists(A, B):
    """Per-dimension squared differences, shape (p, n, m)."""
    A, B = _as_2d(A), _as_2d(B)
    return (A.T[:, :, None] - B.T[:, None, :]) ** 2


def gram(hyper: Hyperparams, A, B):
    """Additive SE Gram matrix between the rows of ``A`` and ``B``."""
    A, B = _as_2d(A), _as_2d(B)
    p = hyper.p
    if A.shape[1] != p or B.shape[1] != p:
        raise DomainError(f"inputs have {A.shape[1]}/{B.shape[1]} columns, kernel expects {p}")
    K = np.zeros((A.shape[0], B.shape[0]))
    for d in range(p):
        diff = A[:, d][:, None] - B[:, d][None, :]
        K += np.exp(-(diff * diff) / (2.0 * hyper.lengthscales[d] ** 2))
    return K


def _train_cov(hyper, X):
    C = gram(hyper, X, X)
    C[np.diag_indices_from(C)] += hyper.noise_var
    return C


def log_marginal_likelihood(y, hyper: Hyperparams, X) -> float:
    """log N(y; 0, K + noise_var I)."""
    y = np.asarray(y, dtype=float).ravel()
    X = _as_2d(X)
    if X.shape[0] != y.size:
        raise DomainError("y and X have different numbers of rows")
    if y.size == 0:
        return 0.0
    L = jittered_cholesky(_train_cov(hyper, X))
    alpha = linalg.solve_triangular(L, y, lower=True)
    return float(-0.5 * alpha @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * y.size * LOG_2PI)


def _condition(y, C, Ks, Kss):
    L = jittered_cholesky(C)
    alpha = linalg.cho_solve((L, True), y)
    v = linalg.solve_triangular(L, Ks, lower=True)
    cov = Kss - v.T @ v
    return GpPosterior(Ks.T @ alpha, 0.5 * (cov + cov.T))


def gp_posterior(y, X_train, X_test, hyper: Hyperparams) -> GpPosterior:
    """Posterior of the latent function at ``X_test`` given noisy ``y``."""
    y = np.asarray(y, dtype=float).ravel()
    X_train, X_test = _as_2d(X_train), _as_2d(X_test)
    C = _train_cov(hyper, X_train)
    return _condition(y, C, gram(hyper, X_train, X_test), gram(hyper, X_test, X_test))


def additive_component_posterior(y, X_intv, Z_cols, x_test, hyper: Hyperparams) -> GpPosterior:
    """Posterior of the additive component belonging to ``X_intv``.

    The model is y = f(x) + sum_z g_z(z) + eps with independent SE components;
    ``hyper.lengthscales[0]`` belongs to ``x`` and the rest to the columns of
    ``Z_cols``.  The training covariance contains all components while the
    cross-covariance only contains the one of ``x``.
    """
    y = np.asarray(y, dtype=float).ravel()
    X_intv = _as_2d(X_intv)
    Z_cols = np.asarray(Z_cols, dtype=float).reshape(y.size, -1)
    x_test = _as_2d(x_test)
    X_train = np.hstack([X_intv, Z_cols])
    C = _train_cov(hyper, X_train)
    hx = Hyperparams(hyper.lengthscales[:1], hyper.noise_var)
    return _condition(y, C, gram(hx, X_intv, x_test), gram(hx, x_test, x_test))


def sample_gaussian(post: GpPosterior, n_draws: int, rng_seed=0):
    """Joint draws (n_draws, m) from N(post.mean, post.cov)."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else keyed_rng(rng_seed, "gauss")
    L = jittered_cholesky(post.cov)
    z = rng.standard_normal((n_draws, post.mean.size))
    return post.mean[None, :] + z @ L.T


# -- hyperparameter inference ---------------------------------------------

class _Objective:
    """Log posterior of (log theta, log sigma) with its gradient."""

    def __init__(self, y, X, prior: HyperPrior):
        self.y = np.asarray(y, dtype=float).ravel()
        X = _as_2d(X)
        if X.shape[0] != self.y.size:
            raise DomainError("y and X have different numbers of rows")
        self.p = X.shape[1]
        self.n = self.y.size
        self.D2 = sq_dists(X, X)
        self.prior = prior

    def components(self, theta):
        if np.any(theta <= 0.0) or not np.all(np.isfinite(theta)):
            raise NumericError("lengthscale underflow or overflow")
        return np.exp(-self.D2 / (2.0 * theta[:, None, None] ** 2))

    def log_lik(self, theta, sd):
        if self.n == 0:
            return 0.0
        C = self.components(theta).sum(axis=0)
        C[np.diag_indices_from(C)] += sd * sd
        L = jittered_cholesky(C)
        a = linalg.solve_triangular(L, self.y, lower=True)
        return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * self.n * LOG_2PI)

    def log_post(self, u):
        theta, sd = np.exp(u[:-1]), np.exp(u[-1])
        return self.log_lik(theta, sd) + float(self.prior.log_density(theta, sd))

    def value_and_grad(self, u):
        """Log posterior density (natural parametrization) and its gradient in u."""
        theta, sd = np.exp(u[:-1]), np.exp(u[-1])
        pr = self.prior
        lp = float(pr.log_density(theta, sd))
        g = np.empty(self.p + 1)
        g[:-1] = -(pr.lengthscale_shape + 1.0) + pr.lengthscale_scale / theta
        g[-1] = -(pr.noise_sd_shape + 1.0) + pr.noise_sd_scale / sd
        if self.n == 0:
            return lp, g
        Kc = self.components(theta)
        C = Kc.sum(axis=0)
        C[np.diag_indices_from(C)] += sd * sd
        L = jittered_cholesky(C)
        alpha = linalg.cho_solve((L, True), self.y)
        ll = float(-0.5 * self.y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * self.n * LOG_2PI)
        W = np.outer(alpha, alpha) - linalg.cho_solve((L, True), np.eye(self.n))
        for d in range(self.p):
            dK = Kc[d] * self.D2[d] / theta[d] ** 2
            g[d] += 0.5 * np.sum(W * dK)
        g[-1] += sd * sd * np.trace(W)
        return ll + lp, g


def map_search(y, X, prior: HyperPrior | None = None, n_restarts: int = 5, rng_seed=0):
    """Multi-start quasi-Newton maximization of the log posterior.

    Returns ``(hyper, log_posterior, grad_norm)`` for the best converged start.
    The first start is the prior mode, the others are prior draws.
    """
    prior = prior or HyperPrior()
    obj = _Objective(y, X, prior)
    if obj.n < 2:
        raise DomainError("MAP estimation needs at least two observations")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else keyed_rng(rng_seed, "map")
    starts = [prior.mode(obj.p).to_log()]
    if n_restarts > 1:
        th, sd = prior.sample(obj.p, n_restarts - 1, rng)
        starts += [np.log(np.r_[t, s]) for t, s in zip(th, sd)]

    def fun(u):
        try:
            v, g = obj.value_and_grad(u)
        except NumericError:
            return np.inf, np.zeros_like(u)
        return -v, -g

    best, best_any = None, None
    for u0 in starts:
        u0 = np.clip(u0, -8.0, 8.0)
        res = optimize.minimize(fun, u0, jac=True, method="L-BFGS-B",
                                options={"gtol": 1e-9, "ftol": 1e-15, "maxiter": 500})
        if not np.isfinite(res.fun):
            continue
        gnorm = float(np.linalg.norm(res.jac))
        cand = (float(-res.fun), res.x, gnorm)
        if best_any is None or cand[0] > best_any[0]:
            best_any = cand
        if gnorm < 1e-5 and (best is None or cand[0] > best[0]):
            best = cand
    if best is None:
        found = None if best_any is None else (Hyperparams.from_log(best_any[1]), best_any[0], best_any[2])
        raise OptimizationError("no restart converged", best=found)
    return Hyperparams.from_log(best[1]), best[0], best[2]


def map_hyperparameters(y, X, prior: HyperPrior | None = None, n_restarts: int = 5, rng_seed=0) -> Hyperparams:
    """MAP hyperparameters maximizing log p(y | X, Theta) + log p(Theta)."""
    return map_search(y, X, prior, n_restarts, rng_seed)[0]


def adaptive_metropolis(log_target, x0, n_samples, rng, burn_in=500, thin=5, target_accept=0.234):
    """Random-walk Metropolis with a diagonal Gaussian proposal.

    During burn-in a global scale is tuned by Robbins-Monro toward
    ``target_accept`` and the per-coordinate spread is re-estimated once,
    half way through.  The kernel is frozen afterwards.

    Returns ``(samples (n_samples, d), acceptance_rate_after_burn_in)``.
    """
    x = np.array(x0, dtype=float)
    d = x.size
    lp = log_target(x)
    if not np.isfinite(lp):
        raise DomainError("log target is not finite at the starting point")
    log_scale = np.log(2.38 / np.sqrt(d))
    spread = np.ones(d)
    history = np.empty((burn_in, d))
    for t in range(burn_in):
        prop = x + np.exp(log_scale) * spread * rng.standard_normal(d)
        lq = log_target(prop)
        acc = np.exp(min(0.0, lq - lp)) if np.isfinite(lq) else 0.0
        if rng.random() < acc:
            x, lp = prop, lq
        log_scale += (acc - target_accept) / (t + 1.0) ** 0.6
        history[t] = x
        if t + 1 == burn_in // 2 and t > 20:
            sd = history[t // 2: t + 1].std(axis=0)
            spread = np.maximum(sd, 1e-3) * np.sqrt(d) / 2.38
            log_scale = np.log(2.38 / np.sqrt(d))
    step = np.exp(log_scale) * spread
    out = np.empty((n_samples, d))
    accepted = 0
    total = n_samples * thin
    for i in range(total):
        prop = x + step * rng.standard_normal(d)
        lq = log_target(prop)
        if np.isfinite(lq) and np.log(rng.random()) < lq - lp:
            x, lp = prop, lq
            accepted += 1
        if (i + 1) % thin == 0:
            out[i // thin] = x
    return out, accepted / max(total, 1)


@dataclass
class HyperSamples:
    """Posterior hyperparameter draws for one family."""

    lengthscales: np.ndarray   # (S, p)
    noise_var: np.ndarray      # (S,)
    acceptance_rate: float = float("nan")

    def __len__(self):
        return self.noise_var.size

    def __getitem__(self, i) -> Hyperparams:
        return Hyperparams(tuple(self.lengthscales[i]), self.noise_var[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def to_dict(self):
        return {"lengthscales": self.lengthscales.tolist(), "noise_var": self.noise_var.tolist(),
                "acceptance_rate": self.acceptance_rate}

    @classmethod
    def from_dict(cls, d):
        ls = np.asarray(d["lengthscales"], dtype=float)
        return cls(ls.reshape(len(d["noise_var"]), -1), np.asarray(d["noise_var"], dtype=float),
                   float(d.get("acceptance_rate", float("nan"))))


def sample_hyperparameters(y, X, prior: HyperPrior | None = None, n_samples: int = 50, rng_seed=0,
                           burn_in: int = 500, thin: int = 5) -> HyperSamples:
    """Draw from p(Theta | y, X) by adaptive random-walk Metropolis in log space.

    With empty ``y`` the chain targets the prior.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    prior = prior or HyperPrior()
    obj = _Objective(y, X, prior)
    if obj.p < 1:
        raise DomainError("kernel needs at least one input dimension")

    def log_target(u):
        if np.any(np.abs(u) > 20):
            return -np.inf
        try:
            return obj.log_post(u) + float(np.sum(u))  # + log Jacobian of exp
        except NumericError:
            return -np.inf

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else keyed_rng(rng_seed, "hyper")
    u0 = prior.mode(obj.p).to_log()
    draws, acc = adaptive_metropolis(log_target, u0, n_samples, rng, burn_in=burn_in, thin=thin)
    return HyperSamples(np.exp(draws[:, :-1]), np.exp(2.0 * draws[:, -1]), acc)
