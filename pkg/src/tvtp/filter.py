"""Forward filter, smoother, path-enumeration oracle and Fisher-identity score.

Time indexing: ``data.y`` and ``data.z`` hold ``X_0..X_T``. The first scored
observation is ``t0 = config.first_obs``; rows of every per-step array
correspond to ``t = t0..T``. The initial rule describes ``S_{t0-1}`` and is
pushed through ``Q(z_{t0-1})`` to give the first predicted probabilities.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numba as nb
import numpy as np

from .exceptions import DomainError, NumericError, SizeError
from .model import (
    ModelConfig,
    ParamVector,
    destination_index,
    emission_terms,
    log_transition_matrices,
    stationary_distribution,
)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed series ``X_0..X_T`` with optional simulated regimes."""

    y: np.ndarray
    z: np.ndarray
    s_true: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if y.ndim != 1 or z.ndim != 1 or y.shape != z.shape:
            raise DomainError(f"y and z must be 1-D of equal length, got {y.shape} and {z.shape}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise DomainError("y and z must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if self.s_true is not None:
            s = np.asarray(self.s_true, dtype=np.int64)
            if s.shape != y.shape:
                raise DomainError("s_true must match y in length")
            object.__setattr__(self, "s_true", s)

    @property
    def T(self) -> int:
        return self.y.shape[0] - 1

    def n_scored(self, config: ModelConfig) -> int:
        return self.y.shape[0] - config.first_obs

    def check(self, config: ModelConfig) -> None:
        need = max(config.ar_order_y, config.z_order) + 2
        if self.y.shape[0] < need:
            raise DomainError(f"need at least {need} observations, got {self.y.shape[0]}")

    def segment(self, start: int, stop: int) -> "Dataset":
        s = None if self.s_true is None else self.s_true[start:stop]
        return Dataset(self.y[start:stop], self.z[start:stop], s)


class InitKind(str, Enum):
    UNIFORM = "uniform"
    STATIONARY = "stationary"
    FIXED = "fixed"


@dataclass(frozen=True, eq=False)
class InitRule:
    """Distribution of the regime just before the first scored observation.

    ``STATIONARY`` uses the stationary law of ``Q`` at the covariate value of
    that time point, so it depends on the transition parameters.
    """

    kind: InitKind = InitKind.STATIONARY
    probs: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))
        if self.kind is InitKind.FIXED:
            p = np.asarray(self.probs, dtype=float)
            if p.ndim != 1 or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
                raise DomainError("fixed init rule needs a probability vector")
            object.__setattr__(self, "probs", p / p.sum())

    @classmethod
    def uniform(cls):
        return cls(InitKind.UNIFORM)

    @classmethod
    def stationary(cls):
        return cls(InitKind.STATIONARY)

    @classmethod
    def fixed(cls, probs):
        return cls(InitKind.FIXED, probs)

    def distribution(self, P0: np.ndarray) -> np.ndarray:
        K = P0.shape[0]
        if self.kind is InitKind.UNIFORM:
            return np.full(K, 1.0 / K)
        if self.kind is InitKind.FIXED:
            if self.probs.shape != (K,):
                raise DomainError(f"fixed init rule has {self.probs.shape[0]} states, model {K}")
            return self.probs
        return stationary_distribution(P0)


STATIONARY = InitRule.stationary()


@dataclass
class FilterOutput:
    """Predicted regime probabilities and one-step log predictive densities."""

    delta: np.ndarray
    step_loglik: np.ndarray
    loglik: float
    filtered: np.ndarray = field(repr=False)
    t0: int = 1

    @property
    def mean_loglik(self) -> float:
        return self.loglik / self.step_loglik.shape[0]


# --- kernels -----------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _forward_kernel(log_emis, Q, nu):
    n, K = log_emis.shape
    delta = np.empty((n, K))
    filt = np.empty((n, K))
    step = np.empty(n)
    la = np.empty(K)
    for b in range(K):
        acc = 0.0
        for a in range(K):
            acc += nu[a] * Q[0, a, b]
        delta[0, b] = acc
    for t in range(n):
        mx = -np.inf
        for s in range(K):
            la[s] = np.log(delta[t, s]) + log_emis[t, s]
            if la[s] > mx:
                mx = la[s]
        if not np.isfinite(mx):
            return delta, filt, step, t
        acc = 0.0
        for s in range(K):
            acc += np.exp(la[s] - mx)
        c = mx + np.log(acc)
        step[t] = c
        for s in range(K):
            filt[t, s] = np.exp(la[s] - c)
        if t + 1 < n:
            tot = 0.0
            for b in range(K):
                acc = 0.0
                for a in range(K):
                    acc += filt[t, a] * Q[t + 1, a, b]
                delta[t + 1, b] = acc
                tot += acc
            for b in range(K):
                delta[t + 1, b] /= tot
    return delta, filt, step, -1


@nb.njit(cache=True, nogil=True)
def _backward_kernel(filt, delta, Q, nu):
    # pair[0] is (S_{t0-1}, S_{t0}); pair[i] is (S_{t-1}, S_t) for t = t0 + i
    n, K = filt.shape
    marg = np.empty((n, K))
    pair = np.empty((n, K, K))
    init = np.zeros(K)
    ratio = np.empty(K)
    for s in range(K):
        marg[n - 1, s] = filt[n - 1, s]
    for i in range(n - 1, 0, -1):
        for b in range(K):
            ratio[b] = marg[i, b] / delta[i, b] if delta[i, b] > 0 else 0.0
        for a in range(K):
            acc = 0.0
            for b in range(K):
                v = filt[i - 1, a] * Q[i, a, b] * ratio[b]
                pair[i, a, b] = v
                acc += v
            marg[i - 1, a] = acc
    for b in range(K):
        ratio[b] = marg[0, b] / delta[0, b] if delta[0, b] > 0 else 0.0
    for a in range(K):
        for b in range(K):
            v = nu[a] * Q[0, a, b] * ratio[b]
            pair[0, a, b] = v
            init[a] += v
    return marg, pair, init


# --- public API --------------------------------------------------------------


def _prepare(data: Dataset, params: ParamVector, config: ModelConfig, init: InitRule,
             derivatives: bool = False):
    params.check(config)
    data.check(config)
    t0 = config.first_obs
    # extreme residuals overflow to a zero density, which the recursion reports
    with np.errstate(over="ignore"):
        terms = emission_terms(data.y, data.z, params, config, derivatives=derivatives)
    logQ = log_transition_matrices(data.z[t0 - 1 : -1], params)
    Q = np.exp(logQ)
    nu = init.distribution(Q[0])
    return terms, logQ, Q, nu


def _run_forward(terms, Q, nu, t0):
    delta, filt, step, bad = _forward_kernel(terms.logdens, Q, nu)
    if bad >= 0:
        raise NumericError(f"all regimes have zero density at t={t0 + bad}")
    return delta, filt, step


def forward_filter(data: Dataset, params: ParamVector, config: ModelConfig,
                   init: InitRule = STATIONARY) -> FilterOutput:
    """Run the prediction/update recursion and return the log-likelihood.

    ``delta[i]`` is ``P(S_t = . | X_0..X_{t-1})`` and ``step_loglik[i]`` is
    ``log p(X_t | X_0..X_{t-1})`` for ``t = t0 + i``.
    """
    terms, _, Q, nu = _prepare(data, params, config, init)
    t0 = config.first_obs
    delta, filt, step = _run_forward(terms, Q, nu, t0)
    return FilterOutput(delta=delta, step_loglik=step, loglik=float(np.sum(step)),
                        filtered=filt, t0=t0)


def loglik(data: Dataset, params: ParamVector, config: ModelConfig,
           init: InitRule = STATIONARY) -> float:
    return forward_filter(data, params, config, init).loglik


def _logsumexp(a: np.ndarray) -> float:
    mx = np.max(a)
    if not np.isfinite(mx):
        return float(mx)
    return float(mx + np.log(np.sum(np.exp(a - mx))))


def _enumerate_paths(K: int, length: int, limit: int) -> np.ndarray:
    if K ** length > limit:
        raise SizeError(f"{K}^{length} paths exceed the enumeration guard {limit}")
    return np.array(list(itertools.product(range(K), repeat=length)), dtype=np.int64).reshape(-1, length)


def _path_logweights(data, params, config, init):
    terms, logQ, Q, nu = _prepare(data, params, config, init)
    n, K = terms.logdens.shape
    paths = _enumerate_paths(K, n + 1, 2**20)
    with np.errstate(divide="ignore"):
        lw = np.log(nu)[paths[:, 0]]
    steps = np.arange(n)
    for i in steps:
        lw = lw + logQ[i, paths[:, i], paths[:, i + 1]] + terms.logdens[i, paths[:, i + 1]]
    return paths, lw


def brute_force_loglik(data: Dataset, params: ParamVector, config: ModelConfig,
                       init: InitRule = STATIONARY) -> float:
    """Total log-likelihood by summing the joint density over every regime path.

    Independent of the recursion; only usable for short series (``K^(n+1) <= 2^20``).
    """
    _, lw = _path_logweights(data, params, config, init)
    return _logsumexp(lw)


def brute_force_posteriors(data: Dataset, params: ParamVector, config: ModelConfig,
                           init: InitRule = STATIONARY) -> np.ndarray:
    """``P(S_t = s | X_0..X_T)`` for scored ``t`` by path enumeration."""
    paths, lw = _path_logweights(data, params, config, init)
    w = np.exp(lw - _logsumexp(lw))
    K = params.n_regimes
    n = paths.shape[1] - 1
    out = np.zeros((n, K))
    for i in range(n):
        out[i] = np.bincount(paths[:, i + 1], weights=w, minlength=K)
    return out


@dataclass
class SmootherOutput:
    marginals: np.ndarray
    pairwise: np.ndarray
    init_pair: np.ndarray
    init_marginal: np.ndarray
    nu: np.ndarray
    filter: FilterOutput


def _smooth(terms, Q, nu, t0):
    delta, filt, step = _run_forward(terms, Q, nu, t0)
    marg, pair, init_m = _backward_kernel(filt, delta, Q, nu)
    out = FilterOutput(delta=delta, step_loglik=step, loglik=float(np.sum(step)),
                       filtered=filt, t0=t0)
    return SmootherOutput(marg, pair[1:], pair[0], init_m, nu, out)


def smooth(data: Dataset, params: ParamVector, config: ModelConfig,
           init: InitRule = STATIONARY) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed marginals ``(n, K)`` and pairwise probabilities ``(n-1, K, K)``.

    ``pairwise[i - 1][a, b] = P(S_{t-1} = a, S_t = b | X_0..X_T)`` for ``t = t0 + i``.
    """
    terms, _, Q, nu = _prepare(data, params, config, init)
    res = _smooth(terms, Q, nu, config.first_obs)
    return res.marginals, res.pairwise


def _transition_score(xi, Q, zlag, K):
    # xi, Q: (m, K, K); derivative of sum xi * log Q wrt (alpha, beta) of each row
    dest = destination_index(K)
    rows = np.arange(K)[:, None]
    r = xi.sum(axis=2)  # (m, K)
    g = xi[:, rows, dest] - Q[:, rows, dest] * r[:, :, None]  # (m, K, K-1)
    out = np.empty((K, K - 1, 2))
    out[..., 0] = g.sum(axis=0)
    out[..., 1] = np.tensordot(zlag, g, axes=(0, 0))
    return out.ravel()


def _stationary_logscore(P0, z0, nu, weights, K):
    # d log nu(a) / d(trans) weighted by posterior of the initial state
    if K == 2:
        # closed form from pi_0 = q10 / (q01 + q10); exact even when both
        # switching probabilities are far below rounding level of one
        q01, q10 = P0[0, 1], P0[1, 0]
        tot = q01 + q10
        d0 = P0[0, 0] * q01 / tot  # d log pi_0 / d eta_0
        d1 = P0[1, 1] * q10 / tot  # d log pi_1 / d eta_1
        g0 = weights[0] * d0 + weights[1] * (d0 - P0[0, 0])
        g1 = weights[1] * d1 + weights[0] * (d1 - P0[1, 1])
        return np.array([g0, g0 * z0, g1, g1 * z0])
    # d pi = pi dP Z with Z = (I - P + 1 pi')^{-1}
    try:
        Zf = np.linalg.inv(np.eye(K) - P0 + np.outer(np.ones(K), nu))
    except np.linalg.LinAlgError:
        raise NumericError("stationary law is not differentiable at this kernel") from None
    dest = destination_index(K)
    out = np.zeros((K, K - 1, 2))
    # an initial state with zero prior mass also has zero posterior mass
    wr = np.divide(weights, nu, out=np.zeros_like(weights), where=nu > 0)
    for row in range(K):
        for k in range(K - 1):
            dP = np.zeros(K)
            dP[:] = -P0[row] * P0[row, dest[row, k]]
            dP[dest[row, k]] += P0[row, dest[row, k]]
            dpi = nu[row] * (dP @ Zf)
            val = float(wr @ dpi)
            out[row, k, 0] = val
            out[row, k, 1] = val * z0
    return out.ravel()


def _score_from_smoother(data, params, config, init, terms, Q, sm):
    K = config.n_regimes
    t0 = config.first_obs
    sl = config.slices()
    grad = np.zeros(config.n_params)
    w = sm.marginals
    wm = w * terms.d_mean
    ws = w * terms.d_scale
    mu_idx = config.regime_index("mu")
    phi_idx = config.regime_index("phi")
    sig_idx = config.regime_index("sigma")
    grad[sl["mu"]] = np.bincount(mu_idx, weights=wm.sum(axis=0), minlength=config.n_block("mu"))
    if config.ar_order_y:
        per_regime = terms.y_lags.T @ wm  # (p, K)
        g_phi = np.zeros((config.n_block("phi"), config.ar_order_y))
        for s in range(K):
            g_phi[phi_idx[s]] += per_regime[:, s]
        grad[sl["phi"]] = g_phi.ravel()
    grad[sl["sigma"]] = np.bincount(sig_idx, weights=ws.sum(axis=0), minlength=config.n_block("sigma"))
    if K > 1:
        xi = np.concatenate([sm.init_pair[None], sm.pairwise], axis=0)
        zlag = data.z[t0 - 1 : -1]
        g_trans = _transition_score(xi, Q, zlag, K)
        if init.kind is InitKind.STATIONARY:
            g_trans += _stationary_logscore(Q[0], zlag[0], sm.nu, sm.init_marginal, K)
        grad[sl["trans"]] = g_trans
    if config.is_joint:
        wm2 = (w * terms.d_mean_z).sum(axis=1)
        grad[sl["mu_z"]] = wm2.sum()
        if config.ar_order_z:
            grad[sl["psi"]] = terms.z_lags.T @ wm2
        grad[sl["sigma_z"]] = (w * terms.d_scale_z).sum()
        grad[sl["rho"]] = (w * terms.d_rho).sum()
    return grad


def loglik_and_score(data: Dataset, params: ParamVector, config: ModelConfig,
                     init: InitRule = STATIONARY) -> tuple[float, np.ndarray]:
    """Total log-likelihood and its gradient in natural parameter units."""
    terms, _, Q, nu = _prepare(data, params, config, init, derivatives=True)
    sm = _smooth(terms, Q, nu, config.first_obs)
    grad = _score_from_smoother(data, params, config, init, terms, Q, sm)
    return sm.filter.loglik, grad


def fisher_score(data: Dataset, params: ParamVector, config: ModelConfig,
                 init: InitRule = STATIONARY) -> np.ndarray:
    """Gradient of the total log-likelihood via the smoothed complete-data score.

    The emission part weights each regime's log-density gradient by the
    smoothed marginal; the transition part weights the log-kernel gradient by
    the smoothed pairwise probabilities (including the initial step and, for
    the stationary initial rule, the gradient of the initial law).
    """
    return loglik_and_score(data, params, config, init)[1]


def step_logliks(data: Dataset, params: ParamVector, config: ModelConfig,
                 init: InitRule = STATIONARY) -> np.ndarray:
    return forward_filter(data, params, config, init).step_loglik
