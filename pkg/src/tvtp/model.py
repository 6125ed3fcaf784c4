"""Parametric family: covariate-driven transition kernel and switching-AR emissions.

Regime ``s`` moves to regime ``s'`` with probability ``Q(z_{t-1}, s, s')``.
With two regimes the stay probability of regime ``s`` is
``1 / (1 + exp(-alpha_s - beta_s * z))``. With ``K > 2`` regimes every row is a
multinomial logit: the free logits of row ``s`` belong to the destinations
``s, s+1, ..., s+K-2`` (mod ``K``) and destination ``s-1`` (mod ``K``) is the
reference category with logit zero. The first free pair of each row is
therefore always the stay logit, which makes the two-regime case coincide
with the logistic kernel above.

The observation ``Y_t`` is Gaussian with mean ``mu_s + sum_i phi_i Y_{t-i}``
and scale ``sigma_s``. The joint variant adds the non-switching equation
``Z_t = mu_z + sum_i psi_i Z_{t-i} + sigma_z U_{2,t}`` with innovation
correlation ``rho``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DomainError, NumericError

LOG_2PI = math.log(2.0 * math.pi)

SWITCHABLE = ("mu", "phi", "sigma")


class Variant(str, Enum):
    """Which likelihood is evaluated."""

    PARTIAL = "partial"
    JOINT = "joint"


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the model: variant, number of regimes, AR orders, switching flags.

    Parameters
    ----------
    variant : Variant or str
        ``"partial"`` models ``Y_t`` alone (``Z`` only drives the transitions);
        ``"joint"`` models ``(Y_t, Z_t)`` with correlated innovations.
    n_regimes : int
        Number of hidden regimes ``K``.
    ar_order_y : int
        Number of lags of ``Y`` in the ``Y`` equation.
    ar_order_z : int
        Number of lags of ``Z`` in the ``Z`` equation (joint variant only).
    switching : iterable of {"mu", "phi", "sigma"}
        Which ``Y``-equation parameters are regime dependent.
    """

    variant: Variant = Variant.PARTIAL
    n_regimes: int = 2
    ar_order_y: int = 1
    ar_order_z: int = 1
    switching: frozenset = field(default_factory=lambda: frozenset({"mu", "sigma"}))

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "switching", frozenset(self.switching))
        if int(self.n_regimes) != self.n_regimes or self.n_regimes < 1:
            raise DomainError(f"n_regimes must be an integer >= 1, got {self.n_regimes}")
        if self.ar_order_y < 0 or self.ar_order_z < 0:
            raise DomainError("AR orders must be >= 0")
        unknown = self.switching - set(SWITCHABLE)
        if unknown:
            raise DomainError(f"unknown switching flags: {sorted(unknown)}")

    @property
    def is_joint(self) -> bool:
        return self.variant is Variant.JOINT

    @property
    def z_order(self) -> int:
        """Effective Z lag order (zero for the partial variant)."""
        return self.ar_order_z if self.is_joint else 0

    @property
    def first_obs(self) -> int:
        """Index of the first scored observation; earlier points are lags only."""
        return max(self.ar_order_y, self.z_order, 1)

    def n_block(self, name: str) -> int:
        return self.n_regimes if name in self.switching else 1

    @property
    def n_trans(self) -> int:
        return self.n_regimes * (self.n_regimes - 1) * 2

    @property
    def n_params(self) -> int:
        n = (
            self.n_block("mu")
            + self.n_block("phi") * self.ar_order_y
            + self.n_block("sigma")
            + self.n_trans
        )
        if self.is_joint:
            n += 3 + self.ar_order_z
        return n

    def slices(self) -> dict[str, slice]:
        """Positions of each parameter block in the flat vector."""
        out = {}
        pos = 0
        sizes = [
            ("mu", self.n_block("mu")),
            ("phi", self.n_block("phi") * self.ar_order_y),
            ("sigma", self.n_block("sigma")),
            ("trans", self.n_trans),
        ]
        if self.is_joint:
            sizes += [("mu_z", 1), ("psi", self.ar_order_z), ("sigma_z", 1), ("rho", 1)]
        for name, size in sizes:
            out[name] = slice(pos, pos + size)
            pos += size
        return out

    def param_names(self) -> list[str]:
        K = self.n_regimes
        names: list[str] = []
        names += [f"mu{s}" for s in range(K)] if "mu" in self.switching else ["mu"]
        for r in range(self.n_block("phi")):
            for i in range(1, self.ar_order_y + 1):
                names.append(f"phi{i}" if "phi" not in self.switching else f"phi{i}_{r}")
        names += [f"sigma{s}" for s in range(K)] if "sigma" in self.switching else ["sigma"]
        for a in range(K):
            for k in range(K - 1):
                d = (a + k) % K
                tag = f"{a}" if K == 2 else f"{a}_{d}"
                names += [f"alpha{tag}", f"beta{tag}"]
        if self.is_joint:
            names += ["mu_z"] + [f"psi{i}" for i in range(1, self.ar_order_z + 1)]
            names += ["sigma_z", "rho"]
        return names

    def regime_index(self, name: str) -> np.ndarray:
        """Map each regime to its row in a (possibly non-switching) block."""
        if name in self.switching:
            return np.arange(self.n_regimes)
        return np.zeros(self.n_regimes, dtype=int)


def _as_array(x, ndim: int) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    while a.ndim < ndim:
        a = a[np.newaxis]
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParamVector:
    """All model parameters in their natural (constrained) units.

    ``trans`` has shape ``(K, K-1, 2)``: ``trans[s, k] = (alpha, beta)`` is the
    logit pair of row ``s`` for destination ``(s + k) mod K``. The ``Z``-equation
    fields are ``None`` for the partial variant.
    """

    mu: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    trans: np.ndarray
    mu_z: float | None = None
    psi: np.ndarray | None = None
    sigma_z: float | None = None
    rho: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_array(self.mu, 1))
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 0:
            phi = phi.reshape(1, 1)
        elif phi.ndim == 1:
            phi = phi.reshape(1, -1)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma", _as_array(self.sigma, 1))
        trans = np.array(self.trans, dtype=float)
        if trans.ndim == 2:
            trans = trans.reshape(trans.shape[0], -1, 2)
        if trans.ndim != 3 or trans.shape[2] != 2 or trans.shape[1] != trans.shape[0] - 1:
            raise DomainError(f"trans must have shape (K, K-1, 2), got {trans.shape}")
        trans.setflags(write=False)
        object.__setattr__(self, "trans", trans)
        joint = [self.mu_z, self.psi, self.sigma_z, self.rho]
        if any(v is not None for v in joint):
            if any(v is None for v in joint):
                raise DomainError("joint parameters mu_z, psi, sigma_z, rho must be given together")
            object.__setattr__(self, "mu_z", float(self.mu_z))
            object.__setattr__(self, "psi", _as_array(self.psi, 1) if np.size(self.psi) else np.zeros(0))
            object.__setattr__(self, "sigma_z", float(self.sigma_z))
            object.__setattr__(self, "rho", float(self.rho))
        for name, value in self._fields():
            if not np.all(np.isfinite(value)):
                raise DomainError(f"parameter {name} is not finite: {value}")
        if np.any(self.sigma < 0) or (self.sigma_z is not None and self.sigma_z < 0):
            raise DomainError("scale parameters must be non-negative")
        if self.rho is not None and not abs(self.rho) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.rho}")

    @classmethod
    def two_regime(cls, mu, phi, sigma, alpha, beta, mu_z=None, psi=None, sigma_z=None, rho=None):
        """Build a two-regime vector from per-regime stay logits ``alpha`` and ``beta``."""
        trans = np.column_stack([np.asarray(alpha, float), np.asarray(beta, float)])
        return cls(mu, phi, sigma, trans.reshape(2, 1, 2), mu_z, psi, sigma_z, rho)

    def _fields(self):
        yield "mu", self.mu
        yield "phi", self.phi
        yield "sigma", self.sigma
        yield "trans", self.trans
        if self.is_joint:
            yield "mu_z", self.mu_z
            yield "psi", self.psi
            yield "sigma_z", self.sigma_z
            yield "rho", self.rho

    @property
    def n_regimes(self) -> int:
        return self.trans.shape[0]

    @property
    def is_joint(self) -> bool:
        return self.rho is not None

    def to_flat(self) -> np.ndarray:
        parts = [self.mu, self.phi.ravel(), self.sigma, self.trans.ravel()]
        if self.is_joint:
            parts += [[self.mu_z], self.psi, [self.sigma_z], [self.rho]]
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    @classmethod
    def from_flat(cls, config: ModelConfig, vec) -> "ParamVector":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (config.n_params,):
            raise DomainError(f"expected {config.n_params} parameters, got shape {vec.shape}")
        sl = config.slices()
        K = config.n_regimes
        kw = dict(
            mu=vec[sl["mu"]],
            phi=vec[sl["phi"]].reshape(config.n_block("phi"), config.ar_order_y),
            sigma=vec[sl["sigma"]],
            trans=vec[sl["trans"]].reshape(K, K - 1, 2),
        )
        if config.is_joint:
            kw.update(
                mu_z=vec[sl["mu_z"]][0],
                psi=vec[sl["psi"]],
                sigma_z=vec[sl["sigma_z"]][0],
                rho=vec[sl["rho"]][0],
            )
        return cls(**kw)

    def check(self, config: ModelConfig) -> None:
        """Raise :class:`DomainError` unless this vector is a valid point for ``config``."""
        if self.n_regimes != config.n_regimes:
            raise DomainError(f"params have {self.n_regimes} regimes, config {config.n_regimes}")
        if self.mu.shape != (config.n_block("mu"),):
            raise DomainError(f"mu has shape {self.mu.shape}")
        if self.phi.shape != (config.n_block("phi"), config.ar_order_y):
            if not (config.ar_order_y == 0 and self.phi.size == 0):
                raise DomainError(f"phi has shape {self.phi.shape}")
        if self.sigma.shape != (config.n_block("sigma"),):
            raise DomainError(f"sigma has shape {self.sigma.shape}")
        if self.is_joint != config.is_joint:
            raise DomainError(
                "partial variant takes no Z-equation parameters"
                if not config.is_joint
                else "joint variant needs mu_z, psi, sigma_z and rho"
            )
        if config.is_joint and self.psi.shape != (config.ar_order_z,):
            raise DomainError(f"psi has shape {self.psi.shape}")
        if np.any(self.sigma <= 0) or (self.is_joint and self.sigma_z <= 0):
            raise DomainError("scale parameters must be strictly positive")

    def as_partial(self) -> "ParamVector":
        """Drop the Z-equation parameters."""
        return replace(self, mu_z=None, psi=None, sigma_z=None, rho=None)

    def allclose(self, other: "ParamVector", rtol=1e-12, atol=1e-12) -> bool:
        a, b = self.to_flat(), other.to_flat()
        return a.shape == b.shape and bool(np.allclose(a, b, rtol=rtol, atol=atol))

    def __repr__(self):
        inner = ", ".join(f"{k}={np.round(v, 6).tolist()}" for k, v in self._fields())
        return f"ParamVector({inner})"


def design_params(rho: float | None = 0.0, variant: Variant | str = Variant.JOINT) -> ParamVector:
    """The two-regime switching AR(1) used in the Monte Carlo design."""
    full = ParamVector.two_regime(
        mu=[1.0, -1.0],
        phi=[0.9],
        sigma=[1.0, 1.0],
        alpha=[2.0, 2.0],
        beta=[-0.5, 0.5],
        mu_z=0.2,
        psi=[0.8],
        sigma_z=1.0,
        rho=0.0 if rho is None else rho,
    )
    return full if Variant(variant) is Variant.JOINT else full.as_partial()


# --- transition kernel -------------------------------------------------------


def _free_logits(z: np.ndarray, params: ParamVector) -> np.ndarray:
    # (n, K, K-1): alpha + beta * z for every row and free destination
    alpha = params.trans[..., 0]
    beta = params.trans[..., 1]
    return alpha[np.newaxis] + beta[np.newaxis] * z[:, np.newaxis, np.newaxis]


def destination_index(K: int) -> np.ndarray:
    """``dest[s, k]``: destination of the k-th free logit of row ``s``."""
    return (np.arange(K)[:, None] + np.arange(K - 1)[None, :]) % K


def log_transition_matrices(z, params: ParamVector) -> np.ndarray:
    """Log transition matrices for every covariate value, shape ``(n, K, K)``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(z)):
        raise DomainError("transition covariate must be finite")
    K = params.n_regimes
    n = z.shape[0]
    if K == 1:
        return np.zeros((n, 1, 1))
    if K == 2:
        eta = _free_logits(z, params)[:, :, 0]
        # log-expit without overflow
        log_stay = -np.logaddexp(0.0, -eta)
        log_move = -np.logaddexp(0.0, eta)
        out = np.empty((n, 2, 2))
        out[:, 0, 0] = log_stay[:, 0]
        out[:, 0, 1] = log_move[:, 0]
        out[:, 1, 1] = log_stay[:, 1]
        out[:, 1, 0] = log_move[:, 1]
        return out
    logits = np.zeros((n, K, K))
    dest = destination_index(K)
    rows = np.arange(K)[:, None]
    logits[:, rows, dest] = _free_logits(z, params)
    mx = logits.max(axis=2, keepdims=True)
    lse = mx + np.log(np.exp(logits - mx).sum(axis=2, keepdims=True))
    return logits - lse


def transition_matrices(z, params: ParamVector) -> np.ndarray:
    return np.exp(log_transition_matrices(z, params))


def transition_matrix(z: float, params: ParamVector) -> np.ndarray:
    """Row-stochastic ``K x K`` matrix ``Q(z, s, s')``."""
    if np.ndim(z) != 0:
        raise DomainError("transition_matrix takes a scalar covariate")
    return transition_matrices(np.array([z]), params)[0]


def q_lower_bound(z, params: ParamVector):
    """Smallest transition probability at covariate ``z`` (scalar or array).

    Every entry of ``Q(z)`` is bounded below by this value, which is the exact
    state-uniform lower bound for the logistic family.
    """
    Q = transition_matrices(z, params)
    out = Q.reshape(Q.shape[0], -1).min(axis=1)
    return float(out[0]) if np.ndim(z) == 0 else out


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary law of a row-stochastic matrix.

    Uses Grassmann-Taksar-Heyman state reduction, which only touches the
    off-diagonal entries and stays accurate for nearly absorbing chains
    (stay probabilities that round to one).
    """
    A = np.array(P, dtype=float)
    K = A.shape[0]
    if K == 1:
        return np.ones(1)
    for k in range(K - 1, 0, -1):
        out = A[k, :k].sum()
        if not out > 0:
            raise NumericError("transition matrix has no unique stationary distribution")
        A[:k, k] /= out
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(K)
    pi[0] = 1.0
    for k in range(1, K):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


# --- emissions ---------------------------------------------------------------


def regime_params(params: ParamVector, config: ModelConfig):
    """Per-regime ``mu``, ``phi`` rows and ``sigma``."""
    mu = params.mu[config.regime_index("mu")]
    phi = params.phi[config.regime_index("phi")] if config.ar_order_y else np.zeros((config.n_regimes, 0))
    sigma = params.sigma[config.regime_index("sigma")]
    return mu, phi, sigma


def emission_logdensity(obs_t, lags, regime: int, params: ParamVector, config: ModelConfig) -> float:
    """Log density of one observation given its lags and the current regime.

    Parameters
    ----------
    obs_t : float or (float, float)
        ``y_t`` or ``(y_t, z_t)``. ``z_t`` is ignored by the partial variant.
    lags : sequence or (sequence, sequence)
        Lagged ``y`` values, most recent first, or a pair ``(y_lags, z_lags)``.
    regime : int
    """
    params.check(config)
    if np.ndim(obs_t) == 0:
        y_t, z_t = float(obs_t), None
    else:
        y_t, z_t = float(obs_t[0]), float(obs_t[1])
    if config.is_joint or (len(lags) == 2 and np.ndim(lags[0]) == 1):
        y_lags, z_lags = lags
    else:
        y_lags, z_lags = lags, ()
    y_lags = np.asarray(y_lags, dtype=float)[: config.ar_order_y]
    if y_lags.shape[0] < config.ar_order_y:
        raise DomainError(f"need {config.ar_order_y} lags of y")
    mu, phi, sigma = regime_params(params, config)
    m1 = mu[regime] + phi[regime] @ y_lags
    s1 = sigma[regime]
    if not config.is_joint:
        e = (y_t - m1) / s1
        return -0.5 * LOG_2PI - math.log(s1) - 0.5 * e * e
    if z_t is None:
        raise DomainError("joint variant needs (y_t, z_t)")
    z_lags = np.asarray(z_lags, dtype=float)[: config.ar_order_z]
    if z_lags.shape[0] < config.ar_order_z:
        raise DomainError(f"need {config.ar_order_z} lags of z")
    m2 = params.mu_z + params.psi @ z_lags
    u1 = (y_t - m1) / s1
    u2 = (z_t - m2) / params.sigma_z
    r = params.rho
    om = 1.0 - r * r
    quad = (u1 * u1 - 2.0 * r * u1 * u2 + u2 * u2) / om
    return -LOG_2PI - math.log(s1) - math.log(params.sigma_z) - 0.5 * math.log(om) - 0.5 * quad


def lag_matrix(x: np.ndarray, order: int, start: int) -> np.ndarray:
    """Rows ``t = start..len(x)-1`` of ``[x_{t-1}, ..., x_{t-order}]``."""
    n = x.shape[0] - start
    out = np.empty((n, order))
    for i in range(order):
        out[:, i] = x[start - i - 1 : x.shape[0] - i - 1]
    return out


@dataclass
class EmissionTerms:
    """Log densities and their derivatives for every scored ``t`` and regime.

    ``d_mean``/``d_scale`` are derivatives of the log density with respect to
    the conditional mean and scale of ``Y``; the ``*_z`` and ``d_rho`` arrays
    cover the ``Z`` equation in the joint variant.
    """

    logdens: np.ndarray
    d_mean: np.ndarray
    d_scale: np.ndarray
    y_lags: np.ndarray
    z_lags: np.ndarray | None = None
    d_mean_z: np.ndarray | None = None
    d_scale_z: np.ndarray | None = None
    d_rho: np.ndarray | None = None


def emission_terms(y: np.ndarray, z: np.ndarray, params: ParamVector, config: ModelConfig,
                   derivatives: bool = True) -> EmissionTerms:
    """Vectorized emission log densities, shape ``(n, K)`` with ``n = T + 1 - first_obs``."""
    t0 = config.first_obs
    mu, phi, sigma = regime_params(params, config)
    Yl = lag_matrix(y, config.ar_order_y, t0)
    yt = y[t0:, None]
    m1 = mu[None, :] + Yl @ phi.T
    inv1 = 1.0 / sigma[None, :]
    u1 = (yt - m1) * inv1
    if not config.is_joint:
        logdens = -0.5 * LOG_2PI - np.log(sigma)[None, :] - 0.5 * u1 * u1
        if not derivatives:
            return EmissionTerms(logdens, None, None, Yl)
        return EmissionTerms(logdens, u1 * inv1, (u1 * u1 - 1.0) * inv1, Yl)
    Zl = lag_matrix(z, config.ar_order_z, t0)
    m2 = params.mu_z + Zl @ params.psi
    s2 = params.sigma_z
    u2 = ((z[t0:] - m2) / s2)[:, None]
    r = params.rho
    om = 1.0 - r * r
    quad = (u1 * u1 - 2.0 * r * u1 * u2 + u2 * u2) / om
    logdens = (
        -LOG_2PI - np.log(sigma)[None, :] - math.log(s2) - 0.5 * math.log(om) - 0.5 * quad
    )
    if not derivatives:
        return EmissionTerms(logdens, None, None, Yl, Zl)
    a1 = (u1 - r * u2) / om
    a2 = (u2 - r * u1) / om
    return EmissionTerms(
        logdens=logdens,
        d_mean=a1 * inv1,
        d_scale=(a1 * u1 - 1.0) * inv1,
        y_lags=Yl,
        z_lags=Zl,
        d_mean_z=a2 / s2,
        d_scale_z=(a2 * u2 - 1.0) / s2,
        d_rho=r / om + (u1 * u2 * om - r * quad * om) / (om * om),
    )


# --- transforms --------------------------------------------------------------


def _transformed_positions(config: ModelConfig):
    sl = config.slices()
    log_idx = list(range(sl["sigma"].start, sl["sigma"].stop))
    atanh_idx = []
    if config.is_joint:
        log_idx.append(sl["sigma_z"].start)
        atanh_idx.append(sl["rho"].start)
    return np.array(log_idx, dtype=int), np.array(atanh_idx, dtype=int)


def pack(params: ParamVector, config: ModelConfig) -> np.ndarray:
    """Map to the unconstrained optimizer space (``log`` scales, ``atanh`` rho)."""
    params.check(config)
    raw = params.to_flat()
    log_idx, atanh_idx = _transformed_positions(config)
    raw[log_idx] = np.log(raw[log_idx])
    raw[atanh_idx] = np.arctanh(raw[atanh_idx])
    return raw


def unpack(raw, config: ModelConfig) -> ParamVector:
    """Inverse of :func:`pack`."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise DomainError("unconstrained vector has non-finite entries")
    vec = raw.copy()
    log_idx, atanh_idx = _transformed_positions(config)
    with np.errstate(over="ignore"):
        vec[log_idx] = np.exp(vec[log_idx])
    vec[atanh_idx] = np.tanh(vec[atanh_idx])
    if not np.all(np.isfinite(vec)):
        raise DomainError("unconstrained vector maps onto an infinite scale")
    if np.any(vec[log_idx] == 0) or np.any(np.abs(vec[atanh_idx]) >= 1):
        raise DomainError("unconstrained vector maps onto the parameter boundary")
    return ParamVector.from_flat(config, vec)


def unpack_jacobian_diag(raw, config: ModelConfig) -> np.ndarray:
    """Diagonal of d(natural)/d(raw); the transform is coordinate-wise."""
    raw = np.asarray(raw, dtype=float)
    jac = np.ones_like(raw)
    log_idx, atanh_idx = _transformed_positions(config)
    jac[log_idx] = np.exp(raw[log_idx])
    jac[atanh_idx] = 1.0 - np.tanh(raw[atanh_idx]) ** 2
    return jac


# --- label symmetry ----------------------------------------------------------


def swap_permutation(config: ModelConfig) -> np.ndarray:
    """Index permutation of the flat vector that swaps the two regime labels."""
    if config.n_regimes != 2:
        raise DomainError("label swap is defined for two regimes")
    perm = np.arange(config.n_params)
    sl = config.slices()
    for name in ("mu", "sigma", "phi"):
        if name in config.switching:
            block = perm[sl[name]].reshape(2, -1)
            perm[sl[name]] = block[::-1].ravel()
    t = perm[sl["trans"]].reshape(2, 2)
    perm[sl["trans"]] = t[::-1].ravel()
    return perm


def swap_regimes(params: ParamVector, config: ModelConfig) -> ParamVector:
    """Relabel regime 0 as 1 and vice versa; the likelihood is unchanged."""
    return ParamVector.from_flat(config, params.to_flat()[swap_permutation(config)])


def check_ar_roots(params: ParamVector, config: ModelConfig, margin: float = 1.05) -> bool:
    """Warn when an AR characteristic root lies within ``margin`` of the unit circle.

    Returns True when all roots are comfortably outside.
    """
    rows = [("y", r) for r in params.phi] + ([("z", params.psi)] if params.is_joint else [])
    ok = True
    for label, coefs in rows:
        coefs = np.asarray(coefs)
        if coefs.size == 0 or not np.any(coefs):
            continue
        roots = np.roots(np.r_[-coefs[::-1], 1.0])
        if roots.size and np.min(np.abs(roots)) <= margin:
            ok = False
            warnings.warn(
                f"{label} AR polynomial has a root of modulus {np.min(np.abs(roots)):.4f}",
                RuntimeWarning,
                stacklevel=2,
            )
    return ok


def flat_names(config: ModelConfig) -> list[str]:
    return config.param_names()


def coerce_params(value, config: ModelConfig) -> ParamVector:
    """Accept a ParamVector, a flat sequence, or a name -> value mapping."""
    if isinstance(value, ParamVector):
        return value
    if isinstance(value, dict):
        names = config.param_names()
        missing = [n for n in names if n not in value]
        extra = [k for k in value if k not in names]
        if missing or extra:
            raise DomainError(f"parameter mapping: missing {missing}, unknown {extra}")
        return ParamVector.from_flat(config, [value[n] for n in names])
    if isinstance(value, (Sequence, np.ndarray, Iterable)):
        return ParamVector.from_flat(config, np.asarray(list(value), dtype=float))
    raise DomainError(f"cannot interpret {type(value).__name__} as parameters")
