"""Target and base density families.

A *potential model* is anything with ``dim``, ``potential(x)`` and
``gradient(x)`` where the target density is exp(-potential(x)) / Z for an
unknown Z. A *base density* additionally provides ``neg_log_pdf`` (equal to
``potential`` but guaranteed normalized), ``sample(rng)`` and known moments.

Built-in families: Gaussians, Gaussian mixtures, and Gaussian-mixture
relaxations of signed-binary Boltzmann machines, together with an exact
enumeration oracle for the latter.
"""

import json
import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import _kernels
from .errors import DimensionError, NumericalError, SizeLimitError, UsageError

LOG_2PI = math.log(2.0 * math.pi)

#: hard cap on exhaustive enumeration (2^20 states)
MAX_ENUM_UNITS = 20

#: relative eigenvalue cutoff when factorizing a shifted coupling matrix
RANK_TOLERANCE = 1e-10


def log_cosh(a):
    """Overflow-safe log(cosh(a)): |a| + log1p(exp(-2|a|)) - log 2."""
    a = np.abs(a)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _as_vector(x, dim, what="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise DimensionError(f"{what} must have shape ({dim},), got {x.shape}")
    return x


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class CustomPotential:
    """Programmatic extension point: wrap arbitrary callables as a target."""

    def __init__(self, dim, potential_fn, gradient_fn):
        self.dim = int(dim)
        self._potential_fn = potential_fn
        self._gradient_fn = gradient_fn

    def potential(self, x):
        return float(self._potential_fn(_as_vector(x, self.dim)))

    def gradient(self, x):
        return np.asarray(self._gradient_fn(_as_vector(x, self.dim)), dtype=np.float64)

    def kernel_spec(self):
        return None


class GaussianDensity:
    """Multivariate Gaussian usable both as a normalized base density and as
    a (normalized, so Z = 1) potential model."""

    def __init__(self, mean, covariance):
        self.mean = _readonly(np.atleast_1d(mean))
        self.dim = self.mean.shape[0]
        cov = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
        if cov.shape != (self.dim, self.dim):
            raise DimensionError(
                f"covariance must be ({self.dim},{self.dim}), got {cov.shape}"
            )
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise UsageError("covariance must be symmetric")
        self.covariance = _readonly(0.5 * (cov + cov.T))
        try:
            self._chol = np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"covariance not positive definite: {exc}") from exc
        self._half_logdet = float(np.sum(np.log(np.diag(self._chol))))
        self._log_norm = self._half_logdet + 0.5 * self.dim * LOG_2PI

    def neg_log_pdf(self, x):
        y = solve_triangular(self._chol, _as_vector(x, self.dim) - self.mean, lower=True)
        return 0.5 * float(y @ y) + self._log_norm

    # potential-model role: same normalized energy, hence Z = 1
    potential = neg_log_pdf

    def gradient(self, x):
        d = _as_vector(x, self.dim) - self.mean
        return cho_solve((self._chol, True), d)

    def sample(self, rng):
        return self.mean + self._chol @ rng.standard_normal(self.dim)

    @property
    def known_mean(self):
        return self.mean

    @property
    def known_cov(self):
        return self.covariance

    def kernel_spec(self):
        return ("gaussian", self.mean, self._chol, self._log_norm)

    def to_dict(self):
        return {
            "type": "gaussian",
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
        }


class GaussianMixtureModel:
    """Gaussian mixture with exactly unit normalizing constant.

    ``covariances`` takes K full matrices; the ``variances`` keyword is a
    shortcut for diagonal components.
    """

    def __init__(self, weights, means, covariances=None, *, variances=None):
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise UsageError("weights must be nonnegative and sum to 1")
        self.weights = _readonly(w)
        self.n_components = w.shape[0]
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        if means.shape[0] != self.n_components:
            means = means.T
        self.means = _readonly(means)
        self.dim = self.means.shape[1]
        if (covariances is None) == (variances is None):
            raise UsageError("supply exactly one of covariances / variances")
        if variances is not None:
            v = np.atleast_2d(np.asarray(variances, dtype=np.float64))
            if v.shape[0] != self.n_components:
                v = v.T
            covariances = np.stack([np.diag(row) for row in v])
        covs = np.asarray(covariances, dtype=np.float64)
        if covs.shape != (self.n_components, self.dim, self.dim):
            raise DimensionError(
                f"covariances must be (K,{self.dim},{self.dim}), got {covs.shape}"
            )
        self.covariances = _readonly(covs)
        self._chols = [np.linalg.cholesky(c) for c in covs]
        self._log_norms = np.array(
            [np.sum(np.log(np.diag(L))) + 0.5 * self.dim * LOG_2PI for L in self._chols]
        )
        with np.errstate(divide="ignore"):
            self._log_w = np.log(self.weights)

    def _component_log_pdfs(self, x):
        out = np.empty(self.n_components)
        for k, L in enumerate(self._chols):
            y = solve_triangular(L, x - self.means[k], lower=True)
            out[k] = -0.5 * (y @ y) - self._log_norms[k]
        return out

    def potential(self, x):
        x = _as_vector(x, self.dim)
        lp = self._log_w + self._component_log_pdfs(x)
        m = lp.max()
        return -(m + np.log(np.exp(lp - m).sum()))

    def gradient(self, x):
        x = _as_vector(x, self.dim)
        lp = self._log_w + self._component_log_pdfs(x)
        r = np.exp(lp - lp.max())
        r /= r.sum()
        g = np.zeros(self.dim)
        for k, L in enumerate(self._chols):
            g += r[k] * cho_solve((L, True), x - self.means[k])
        return g

    def sample(self, rng):
        k = rng.choice(self.n_components, p=self.weights)
        return self.means[k] + self._chols[k] @ rng.standard_normal(self.dim)

    @property
    def known_mean(self):
        return self.weights @ self.means

    @property
    def known_cov(self):
        m = self.known_mean
        cov = np.zeros((self.dim, self.dim))
        for k in range(self.n_components):
            d = self.means[k] - m
            cov += self.weights[k] * (self.covariances[k] + np.outer(d, d))
        return cov

    def tail_mass(self, cut):
        """P(x > cut) under the mixture; univariate models only."""
        if self.dim != 1:
            raise UsageError("tail_mass is defined for 1-D mixtures")
        total = 0.0
        for k in range(self.n_components):
            sd = math.sqrt(self.covariances[k][0, 0])
            z = (cut - self.means[k][0]) / (sd * math.sqrt(2.0))
            total += self.weights[k] * 0.5 * math.erfc(z)
        return total

    def kernel_spec(self):
        diags = np.stack([np.diag(c) for c in self.covariances])
        if any(
            not np.allclose(c, np.diag(np.diag(c)), atol=1e-14) for c in self.covariances
        ):
            return None
        return ("gmm_diag", self._log_w.copy(), self.means.copy(), diags)

    def to_dict(self):
        return {
            "type": "gaussian_mixture",
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }


class BoltzmannMachine:
    """Signed-binary Boltzmann machine: p(s) = exp(s'Ws/2 + s'b) / Z_B."""

    def __init__(self, W, b):
        W = np.atleast_2d(np.asarray(W, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if W.shape != (b.shape[0], b.shape[0]):
            raise DimensionError(f"W must be square matching b, got {W.shape}")
        if not np.allclose(W, W.T, atol=1e-12):
            raise UsageError("W must be symmetric")
        if np.any(np.abs(np.diag(W)) > 1e-12):
            raise UsageError("W must have zero diagonal")
        W = 0.5 * (W + W.T)
        np.fill_diagonal(W, 0.0)
        self.W = _readonly(W)
        self.b = _readonly(b)
        self.n_units = b.shape[0]

    def energy(self, s):
        s = np.asarray(s, dtype=np.float64)
        return 0.5 * float(s @ self.W @ s) + float(s @ self.b)

    def to_dict(self):
        return {"type": "boltzmann", "W": self.W.tolist(), "b": self.b.tolist()}


class BMOracle:
    """Exact enumeration results for a Boltzmann machine."""

    def __init__(self, log_z_b, mean_s, second_moment_s):
        self.log_z_b = float(log_z_b)
        self.mean_s = _readonly(mean_s)
        self.second_moment_s = _readonly(second_moment_s)

    def to_dict(self):
        return {
            "log_z_b": self.log_z_b,
            "mean_s": self.mean_s.tolist(),
            "second_moment_s": self.second_moment_s.tolist(),
        }


class RelaxationModel:
    """Gaussian-mixture relaxation of a Boltzmann machine.

    Defined by a factor Q with QQ' = W + diag(diag_shift); the continuous
    energy is x'x/2 - sum_i log cosh(q_i'x + b_i).
    """

    def __init__(self, Q, b, diag_shift, source):
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        self.Q = _readonly(Q)
        self.b = _readonly(np.atleast_1d(b))
        self.diag_shift = _readonly(np.atleast_1d(diag_shift))
        self.source = source
        self.n_units = self.Q.shape[0]
        self.dim = self.Q.shape[1]
        if self.b.shape != (self.n_units,) or self.diag_shift.shape != (self.n_units,):
            raise DimensionError("b and diag_shift must match Q's row count")

    def potential(self, x):
        return relaxation_potential(self, x)

    def gradient(self, x):
        return relaxation_gradient(self, x)

    def potential_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A = X @ self.Q.T + self.b
        return 0.5 * np.einsum("ij,ij->i", X, X) - log_cosh(A).sum(axis=1)

    def kernel_spec(self):
        return ("relaxation", self.Q, self.b)

    def to_dict(self):
        return {
            "type": "relaxation",
            "Q": self.Q.tolist(),
            "b": self.b.tolist(),
            "diag_shift": self.diag_shift.tolist(),
            "source": self.source.to_dict(),
        }


def relaxation_potential(model, x):
    """Energy x'x/2 - sum_i logcosh(q_i'x + b_i) of the relaxation density."""
    x = _as_vector(x, model.dim)
    a = model.Q @ x + model.b
    return 0.5 * float(x @ x) - float(np.sum(log_cosh(a)))


def relaxation_gradient(model, x):
    """Analytic gradient x - Q' tanh(Qx + b) of the relaxation energy."""
    x = _as_vector(x, model.dim)
    a = model.Q @ x + model.b
    return x - model.Q.T @ np.tanh(a)


def bm_exhaustive_oracle(bm):
    """Exact log Z_B and spin moments by iterating all 2^n signed states.

    Hard-capped at n = 20 units; beyond that enumeration is infeasible.
    """
    if bm.n_units > MAX_ENUM_UNITS:
        raise SizeLimitError(
            f"exhaustive enumeration capped at {MAX_ENUM_UNITS} units, got {bm.n_units}"
        )
    log_z, mean, second = _kernels.bm_enumerate(bm.W, bm.b)
    return BMOracle(log_z, mean, second)


def relaxation_from_bm(bm, eps=1e-6):
    """Build the relaxation by uniformly shifting the coupling diagonal.

    The shift is (-lambda_min(W) + eps) so W + shift*I is positive definite;
    eigenvectors with eigenvalues below RANK_TOLERANCE * lambda_max are
    dropped, so the latent dimension can be below the unit count.
    """
    if eps <= 0:
        raise UsageError("eps must be positive")
    try:
        w_eigvals = np.linalg.eigvalsh(bm.W)
        shift = -w_eigvals[0] + eps
        shifted = bm.W + np.diag(np.full(bm.n_units, shift))
        vals, vecs = np.linalg.eigh(shifted)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    keep = vals > RANK_TOLERANCE * vals[-1]
    Q = vecs[:, keep] * np.sqrt(vals[keep])
    return RelaxationModel(Q, bm.b, np.full(bm.n_units, shift), bm)


def relaxation_true_moments(model, oracle):
    """Exact (log Z, mean, covariance) of the relaxation from spin moments.

    log Z = log Z_B + Tr(shift)/2 + (dim/2) log 2pi - n_units log 2;
    mean = Q' E[s]; cov = Q' E[ss'] Q + I - mean mean'.
    """
    if oracle.mean_s.shape[0] != model.n_units:
        raise DimensionError("oracle does not match the relaxation's source")
    log_z = (
        oracle.log_z_b
        + 0.5 * float(np.sum(model.diag_shift))
        + 0.5 * model.dim * LOG_2PI
        - model.n_units * math.log(2.0)
    )
    mean = model.Q.T @ oracle.mean_s
    cov = model.Q.T @ oracle.second_moment_s @ model.Q + np.eye(model.dim)
    cov -= np.outer(mean, mean)
    return log_z, mean, cov


def generate_bm_params(seed, n_units, s1=6.0, s2=2.0, bias_scale=0.1):
    """Random multimodal Boltzmann machine parameters.

    A Haar-random orthogonal basis R (QR with sign-corrected R diagonal) is
    combined with eigenvalues s1*tanh(s2*n_i), n_i standard normal, giving a
    symmetric V = R diag(e) R'; W keeps V's off-diagonal with zero diagonal
    and biases are N(0, bias_scale^2). Deterministic for a given seed.
    """
    if n_units < 2:
        raise UsageError("need at least 2 units")
    rng = np.random.default_rng(np.uint64(seed))
    A = rng.standard_normal((n_units, n_units))
    Qf, Rf = np.linalg.qr(A)
    signs = np.sign(np.diag(Rf))
    signs[signs == 0] = 1.0
    R = Qf * signs
    e = s1 * np.tanh(s2 * rng.standard_normal(n_units))
    V = (R * e) @ R.T
    W = 0.5 * (V + V.T)
    np.fill_diagonal(W, 0.0)
    b = bias_scale * rng.standard_normal(n_units)
    return BoltzmannMachine(W, b)


_MODEL_TYPES = {
    "gaussian": lambda d: GaussianDensity(d["mean"], d["covariance"]),
    "gaussian_mixture": lambda d: GaussianMixtureModel(
        d["weights"], d["means"], d["covariances"]
    ),
    "boltzmann": lambda d: BoltzmannMachine(d["W"], d["b"]),
    "relaxation": lambda d: RelaxationModel(
        d["Q"], d["b"], d["diag_shift"], model_from_dict(d["source"])
    ),
}


def model_from_dict(d):
    """Rebuild a model from its JSON dictionary form."""
    kind = d.get("type")
    if kind not in _MODEL_TYPES:
        raise UsageError(f"unknown model type {kind!r}")
    return _MODEL_TYPES[kind](d)


def dump_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
