"""Conjugate Bayesian vector autoregression: posterior state, predictives, rank updates.

The regression model for one segment is

    y_t = X_t c + e_t,      e_t | s2 ~ N(0, s2 * Omega),
    c | s2 ~ N(0, s2 * g * I_k),     s2 ~ InverseGamma(a, b),

where ``X_t`` is the S x k design block for one time step (rows are
per-location regressor rows, see :mod:`streamcpd.spatial`) and ``c`` is the
stacked coefficient vector.  Everything downstream (posterior precision,
cross-moment, predictive Student-t, marginal likelihood) follows from standard
normal-inverse-gamma conjugacy; the closed forms are verified against a
numerical double-integration oracle in the test suite before being trusted.

Per observed step the posterior state needs only a rank-S touch:

    P      <- P + X' Omega^-1 X          (precision, "cholesky" backend)
    F      <- F - F X' (Omega + X F X')^-1 X F      ("woodbury" backend)
    W      <- W + X' Omega^-1 y
    ysq    <- ysq + y' Omega^-1 y

and the posterior predictive at a new design block X* is multivariate
Student-t with 2*a_n degrees of freedom, location X* c_n and scale
(b_n / a_n) * (Omega + X* F X*'), where

    c_n = F W,   a_n = a + n*S/2,   b_n = b + (ysq - W' c_n) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

__all__ = [
    "BvarPrior",
    "PredictiveMoments",
    "SufficientStatistics",
    "init_stats",
    "batch_log_marginal",
    "BvarModel",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BvarPrior:
    """Hyperparameters of the conjugate prior.

    a, b:        inverse-gamma shape/scale of the noise variance.
    coef_scale:  g, with coefficient prior covariance s2 * g * I.
    omega_diag:  diagonal of Omega (per-output noise weights), default identity.
    """

    a: float
    b: float
    coef_scale: float
    omega_diag: np.ndarray | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.coef_scale > 0):
            raise ValueError(
                f"prior hyperparameters must be positive, got "
                f"a={self.a}, b={self.b}, coef_scale={self.coef_scale}"
            )
        if self.omega_diag is not None:
            omega = np.asarray(self.omega_diag, dtype=float)
            if omega.ndim != 1 or np.any(omega <= 0):
                raise ValueError("omega_diag must be a 1-d vector of positive reals")
            object.__setattr__(self, "omega_diag", omega)

    def omega_for(self, out_dim: int) -> np.ndarray:
        if self.omega_diag is None:
            return np.ones(out_dim)
        if self.omega_diag.shape[0] != out_dim:
            raise ValueError(
                f"omega_diag has length {self.omega_diag.shape[0]}, expected {out_dim}"
            )
        return self.omega_diag


@dataclass
class PredictiveMoments:
    """First two moments of the posterior predictive at one design block.

    ``covariance`` holds +inf when dof <= 2; callers that need a finite spread
    should fall back to ``scale`` (and say so).
    """

    mean: np.ndarray          # (S,)
    covariance: np.ndarray    # (S, S), inf-filled when dof <= 2
    scale: np.ndarray         # (S, S) Student-t scale matrix
    dof: float


def _as_design(x, out_dim: int, k: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape != (out_dim, k):
        raise ValueError(f"design block has shape {x.shape}, expected {(out_dim, k)}")
    return x


class SufficientStatistics:
    """Conjugate posterior state for one (model, run-length) hypothesis.

    Plain value semantics: one writer, freely copyable/transferable.  The
    ``shape0``/``scale0`` fields are the hyperparameters the hypothesis was
    born with (online tuning only touches future births).
    """

    __slots__ = (
        "k", "out_dim", "shape0", "scale0", "coef_scale", "omega_diag",
        "backend", "precision", "cov", "xty", "ysq", "n_obs",
    )

    def __init__(self, k, out_dim, shape0, scale0, coef_scale, omega_diag, backend):
        self.k = k
        self.out_dim = out_dim
        self.shape0 = float(shape0)
        self.scale0 = float(scale0)
        self.coef_scale = float(coef_scale)
        self.omega_diag = omega_diag
        self.backend = backend
        if backend == "cholesky":
            self.precision = np.eye(k) / coef_scale
            self.cov = None
        elif backend == "woodbury":
            self.precision = None
            self.cov = np.eye(k) * coef_scale
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.xty = np.zeros(k)
        self.ysq = 0.0
        self.n_obs = 0

    def copy(self) -> "SufficientStatistics":
        new = SufficientStatistics.__new__(SufficientStatistics)
        new.k, new.out_dim = self.k, self.out_dim
        new.shape0, new.scale0 = self.shape0, self.scale0
        new.coef_scale, new.omega_diag = self.coef_scale, self.omega_diag
        new.backend = self.backend
        new.precision = None if self.precision is None else self.precision.copy()
        new.cov = None if self.cov is None else self.cov.copy()
        new.xty = self.xty.copy()
        new.ysq = self.ysq
        new.n_obs = self.n_obs
        return new

    # -- posterior pieces ---------------------------------------------------

    @property
    def shape_posterior(self) -> float:
        return self.shape0 + 0.5 * self.n_obs * self.out_dim

    @property
    def scale_posterior(self) -> float:
        c = self.map_coefficients()
        return self.scale0 + 0.5 * (self.ysq - float(self.xty @ c))

    def map_coefficients(self) -> np.ndarray:
        """Posterior-mean / MAP coefficient vector c = F W."""
        if self.backend == "woodbury":
            return self.cov @ self.xty
        return self._solve_precision(self.xty)

    def posterior_cov_factor(self) -> np.ndarray:
        """F = (X' Omega^-1 X + I/g)^-1, the scale-free coefficient covariance."""
        if self.backend == "woodbury":
            return self.cov.copy()
        return self._solve_precision(np.eye(self.k))

    def _solve_precision(self, rhs: np.ndarray) -> np.ndarray:
        try:
            chol = np.linalg.cholesky(self.precision)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * np.trace(self.precision) / self.k
            try:
                chol = np.linalg.cholesky(self.precision + jitter * np.eye(self.k))
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(
                    "posterior precision lost positive definiteness"
                ) from exc
        half = np.linalg.solve(chol, rhs)
        return np.linalg.solve(chol.T, half)

    # -- updates ------------------------------------------------------------

    def update(self, x, y) -> "SufficientStatistics":
        """Absorb one step (X_t, y_t); mutates and returns self."""
        x = _as_design(x, self.out_dim, self.k)
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != self.out_dim:
            raise ValueError(f"observation has length {y.shape[0]}, expected {self.out_dim}")
        xw = x / self.omega_diag[:, None]
        self.xty += xw.T @ y
        self.ysq += float(y @ (y / self.omega_diag))
        if self.backend == "cholesky":
            self.precision += x.T @ xw
        else:
            fxT = self.cov @ x.T                       # (k, S)
            m = np.diag(self.omega_diag) + x @ fxT     # (S, S)
            try:
                gain = np.linalg.solve(m, fxT.T)       # (S, k)
            except np.linalg.LinAlgError:
                jitter = 1e-10 * np.trace(m) / self.out_dim
                gain = np.linalg.solve(m + jitter * np.eye(self.out_dim), fxT.T)
            self.cov -= fxT @ gain
            self.cov = 0.5 * (self.cov + self.cov.T)   # keep symmetric under drift
        self.n_obs += 1
        return self

    # -- predictives ----------------------------------------------------------

    def _predictive_core(self, x_new: np.ndarray):
        """Common pieces: residual quadratic form q, log|M|, b_n, mean."""
        c = self.map_coefficients()
        f = self.posterior_cov_factor()
        m = np.diag(self.omega_diag) + x_new @ f @ x_new.T
        mean = x_new @ c
        b_n = self.scale0 + 0.5 * (self.ysq - float(self.xty @ c))
        return c, f, m, mean, b_n

    def predictive_logpdf(self, x_new, y_new, with_grad: bool = False):
        """Log posterior-predictive density of one step; optionally its gradient
        with respect to (log a, log b) at the birth hyperparameters.
        """
        x_new = _as_design(x_new, self.out_dim, self.k)
        y_new = np.asarray(y_new, dtype=float).reshape(-1)
        _, _, m, mean, b_n = self._predictive_core(x_new)
        resid = y_new - mean
        try:
            chol_m = np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * np.trace(m) / self.out_dim
            chol_m = np.linalg.cholesky(m + jitter * np.eye(self.out_dim))
        z = np.linalg.solve(chol_m, resid)
        q = float(z @ z)
        logdet_m = 2.0 * float(np.sum(np.log(np.diag(chol_m))))
        a_n = self.shape_posterior
        d = self.out_dim
        logpdf = (
            gammaln(a_n + 0.5 * d) - gammaln(a_n)
            - 0.5 * d * _LOG_2PI - 0.5 * d * math.log(b_n)
            - 0.5 * logdet_m
            - (a_n + 0.5 * d) * math.log1p(q / (2.0 * b_n))
        )
        if not with_grad:
            return logpdf
        # a enters only through a_n, b only through b_n; F, W, M, q are free of both.
        d_log_a = self.shape0 * (
            digamma(a_n + 0.5 * d) - digamma(a_n) - math.log1p(q / (2.0 * b_n))
        )
        d_log_b = self.scale0 * (
            -0.5 * d / b_n + (a_n + 0.5 * d) * q / (2.0 * b_n * b_n + q * b_n)
        )
        return logpdf, np.array([d_log_a, d_log_b])

    def predictive_moments(self, x_new) -> PredictiveMoments:
        """Student-t predictive mean/covariance at a new design block."""
        x_new = _as_design(x_new, self.out_dim, self.k)
        _, _, m, mean, b_n = self._predictive_core(x_new)
        a_n = self.shape_posterior
        dof = 2.0 * a_n
        scale = (b_n / a_n) * m
        if dof > 2.0:
            covariance = scale * (dof / (dof - 2.0))
        else:
            covariance = np.full_like(scale, np.inf)
        return PredictiveMoments(mean=mean, covariance=covariance, scale=scale, dof=dof)


def init_stats(prior: BvarPrior, k: int, out_dim: int = 1,
               backend: str = "auto") -> SufficientStatistics:
    """Fresh prior state: precision I/g, zero cross-moment, scale accumulator b."""
    if k < 1:
        raise ValueError(f"need at least one coefficient, got k={k}")
    if backend == "auto":
        backend = "woodbury" if out_dim < k else "cholesky"
    return SufficientStatistics(
        k=k, out_dim=out_dim, shape0=prior.a, scale0=prior.b,
        coef_scale=prior.coef_scale, omega_diag=prior.omega_for(out_dim),
        backend=backend,
    )


def batch_log_marginal(prior: BvarPrior, designs, observations) -> float:
    """One-shot log marginal likelihood of a block of steps.

    ``designs`` is (n, S, k) (or a list of S x k blocks), ``observations`` is
    (n, S).  Computed directly from the stacked batch quantities, independent
    of the incremental update path; used as the prequential-identity anchor
    and by the enumeration oracle.
    """
    x = np.asarray(designs, dtype=float)
    y = np.asarray(observations, dtype=float)
    if x.ndim == 2:
        x = x[:, None, :]
    if y.ndim == 1:
        y = y[:, None]
    n, s, k = x.shape
    if y.shape != (n, s):
        raise ValueError(f"observations have shape {y.shape}, expected {(n, s)}")
    omega = prior.omega_for(s)
    xw = x / omega[None, :, None]
    precision = np.eye(k) / prior.coef_scale + np.einsum("nsk,nsj->kj", xw, x)
    w = np.einsum("nsk,ns->k", xw, y)
    ysq = float(np.einsum("ns,ns->", y / omega[None, :], y))
    c = np.linalg.solve(precision, w)
    a_n = prior.a + 0.5 * n * s
    b_n = prior.b + 0.5 * (ysq - float(w @ c))
    sign, logdet_p = np.linalg.slogdet(precision)
    if sign <= 0:
        raise np.linalg.LinAlgError("batch precision not positive definite")
    return (
        prior.a * math.log(prior.b) - a_n * math.log(b_n)
        + gammaln(a_n) - gammaln(prior.a)
        - 0.5 * (logdet_p + k * math.log(prior.coef_scale))
        - 0.5 * n * s * _LOG_2PI - 0.5 * n * float(np.sum(np.log(omega)))
    )


class BvarModel:
    """One member of the model universe: a design layout plus a conjugate prior.

    The engine only relies on this protocol: ``lag``, ``out_dim``, ``name``,
    ``design(window)``, ``fresh_stats()`` and the SufficientStatistics methods.
    ``a``/``b`` start at the prior and move under online tuning; hypotheses
    keep the values they were born with.
    """

    def __init__(self, layout, prior: BvarPrior, name: str | None = None,
                 backend: str = "auto"):
        self.layout = layout
        self.prior = prior
        self.name = name or f"var(lag={layout.lag})"
        self.backend = backend
        self.a = prior.a
        self.b = prior.b

    @property
    def lag(self) -> int:
        return self.layout.lag

    @property
    def out_dim(self) -> int:
        return self.layout.out_dim

    @property
    def n_coefficients(self) -> int:
        return self.layout.n_coefficients

    def design(self, window: np.ndarray, z=None) -> np.ndarray:
        """S x k design block from the last ``lag`` observations."""
        return self.layout.design_matrix(window, z=z)

    def fresh_stats(self) -> SufficientStatistics:
        prior = BvarPrior(self.a, self.b, self.prior.coef_scale,
                          self.prior.omega_diag)
        return init_stats(prior, self.n_coefficients, self.out_dim, self.backend)

    def __repr__(self) -> str:
        return f"BvarModel({self.name!r}, k={self.n_coefficients}, S={self.out_dim})"
