"""Simulation from the covariate-driven switching AR data generating process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .exceptions import DomainError
from .filter import Dataset
from .model import ModelConfig, ParamVector, Variant, design_params, stationary_distribution, transition_matrices


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """True parameters plus sample size, burn-in, initial values and RNG stream.

    The stream is keyed by ``(seed, cell_index, rep_index)``: equal keys give
    identical draws, distinct keys give independent streams.
    """

    params: ParamVector = field(default_factory=lambda: design_params(0.0))
    T: int = 200
    burnin: int = 100
    y0: float = 0.5
    z0: float = 1.0
    seed: int = 0
    rep_index: int = 0
    cell_index: int = 0

    def __post_init__(self):
        if not self.params.is_joint:
            raise DomainError("the DGP needs the full joint parameter vector")
        if self.T < 1:
            raise DomainError(f"T must be >= 1, got {self.T}")
        if self.burnin < 0:
            raise DomainError("burnin must be >= 0")
        if self.seed < 0 or self.rep_index < 0 or self.cell_index < 0:
            raise DomainError("seed and stream indices must be non-negative")

    @property
    def rho(self) -> float:
        return self.params.rho

    def config(self) -> ModelConfig:
        p = self.params
        switching = {"mu", "sigma"}
        if p.phi.shape[0] > 1:
            switching.add("phi")
        if p.mu.shape[0] == 1 and p.n_regimes > 1:
            switching.discard("mu")
        if p.sigma.shape[0] == 1 and p.n_regimes > 1:
            switching.discard("sigma")
        return ModelConfig(Variant.JOINT, p.n_regimes, p.phi.shape[1], p.psi.shape[0], switching)

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.cell_index, self.rep_index))
        return np.random.Generator(np.random.PCG64(ss))


@nb.njit(cache=True)
def _regime_and_y(Q, u, e1, s0, mu, phi, sigma, y_init):
    N = e1.shape[0]
    K = mu.shape[0]
    p = phi.shape[1]
    s = np.empty(N + 1, dtype=np.int64)
    y = np.empty(N + 1)
    s[0] = s0
    y[0] = y_init
    for t in range(1, N + 1):
        prev = s[t - 1]
        acc = 0.0
        nxt = K - 1
        for b in range(K):
            acc += Q[t - 1, prev, b]
            if u[t] < acc:
                nxt = b
                break
        s[t] = nxt
        m = mu[nxt]
        for i in range(p):
            lag = t - 1 - i
            m += phi[nxt, i] * (y[lag] if lag >= 0 else y_init)
        y[t] = m + sigma[nxt] * e1[t - 1]
    return s, y


def simulate_dgp(spec: DgpSpec) -> Dataset:
    """Draw ``burnin + T`` steps after ``(y0, z0)`` and keep the last ``T + 1`` points.

    The returned ``X_0`` is the last burn-in point (or ``(y0, z0)`` when
    ``burnin == 0``), so the dataset has ``T`` observations after it.
    """
    p = spec.params
    config = spec.config()
    K = p.n_regimes
    N = spec.burnin + spec.T
    rng = spec.rng()
    e = rng.standard_normal((N, 2))
    u = rng.random(N + 1)
    rho = p.rho
    e1 = e[:, 0]
    e2 = rho * e[:, 0] + np.sqrt(1.0 - rho * rho) * e[:, 1]

    z = np.empty(N + 1)
    z[0] = spec.z0
    pz = p.psi.shape[0]
    for t in range(1, N + 1):
        m = p.mu_z
        for i in range(pz):
            lag = t - 1 - i
            m += p.psi[i] * (z[lag] if lag >= 0 else spec.z0)
        z[t] = m + p.sigma_z * e2[t - 1]

    Q = transition_matrices(z[:-1], p)
    pi0 = stationary_distribution(Q[0]) if K > 1 else np.ones(1)
    s0 = int(min(np.searchsorted(np.cumsum(pi0), u[0], side="right"), K - 1))
    mu = p.mu[config.regime_index("mu")]
    phi = p.phi[config.regime_index("phi")] if p.phi.size else np.zeros((K, 0))
    sigma = p.sigma[config.regime_index("sigma")]
    s, y = _regime_and_y(Q, u, e1, s0, mu, np.ascontiguousarray(phi), sigma, spec.y0)
    keep = slice(spec.burnin, N + 1)
    return Dataset(y[keep], z[keep], s[keep])


def innovations(data: Dataset, params: ParamVector, config: ModelConfig | None = None):
    """Recover ``(U_1, U_2)`` from a simulated dataset with known regimes."""
    from .model import lag_matrix, regime_params

    if data.s_true is None:
        raise DomainError("innovations need the simulated regime path")
    if config is None:
        config = DgpSpec(params).config()
    t0 = config.first_obs
    mu, phi, sigma = regime_params(params, config)
    s = data.s_true[t0:]
    Yl = lag_matrix(data.y, config.ar_order_y, t0)
    m1 = mu[s] + np.einsum("ij,ij->i", Yl, phi[s])
    u1 = (data.y[t0:] - m1) / sigma[s]
    Zl = lag_matrix(data.z, config.ar_order_z, t0)
    u2 = (data.z[t0:] - params.mu_z - Zl @ params.psi) / params.sigma_z
    return u1, u2


@dataclass
class TransitionCheck:
    """Empirical stay frequencies per covariate decile against the model curve."""

    rows: list[dict]

    def fraction_within(self, state: int | None = None) -> float:
        rows = [r for r in self.rows if state is None or r["state"] == state]
        return sum(r["within"] for r in rows) / len(rows)

    @property
    def all_states_ok(self) -> bool:
        states = sorted({r["state"] for r in self.rows})
        return all(self.fraction_within(s) >= 0.9 for s in states)


def empirical_transition_check(data: Dataset, params: ParamVector, n_bins: int = 10,
                               n_sd: float = 3.0) -> TransitionCheck:
    """Bin transitions by covariate decile and compare stay frequencies with the kernel.

    For each origin regime and bin the band is ``n_sd`` binomial standard
    deviations around the mean model-implied stay probability.
    """
    if data.s_true is None:
        raise DomainError("transition check needs the simulated regime path")
    s_prev = data.s_true[:-1]
    s_next = data.s_true[1:]
    zl = data.z[:-1]
    Q = transition_matrices(zl, params)
    rows = []
    for state in range(params.n_regimes):
        sel = s_prev == state
        if not np.any(sel):
            continue
        zs = zl[sel]
        stay = (s_next[sel] == state).astype(float)
        prob = Q[sel, state, state]
        edges = np.quantile(zs, np.linspace(0, 1, n_bins + 1))
        idx = np.clip(np.searchsorted(edges, zs, side="right") - 1, 0, n_bins - 1)
        for b in range(n_bins):
            m = idx == b
            n = int(m.sum())
            if n == 0:
                continue
            freq = float(stay[m].mean())
            expected = float(prob[m].mean())
            sd = float(np.sqrt(np.sum(prob[m] * (1 - prob[m]))) / n)
            rows.append(
                dict(
                    state=state,
                    bin=b,
                    z_low=float(edges[b]),
                    z_high=float(edges[b + 1]),
                    n=n,
                    stay_freq=freq,
                    model_prob=expected,
                    band=n_sd * sd,
                    within=bool(abs(freq - expected) <= n_sd * sd + 1e-12),
                )
            )
    return TransitionCheck(rows)
