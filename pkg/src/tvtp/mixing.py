"""Exact checks of the conditional mixing bound for the hidden regime chain.

Given a segment of observations, the regime chain conditioned on the data is
a time-inhomogeneous Markov chain. Its multi-step total-variation contraction
is bounded by ``prod_n (1 - q(z_n))`` where ``q`` is the smallest transition
probability at covariate value ``z_n``. Everything here is computed by exact
enumeration over regime paths, so the inequalities are crisp pass/fail checks.

Segment convention: the conditioning regime sits at dataset index
``t0 - 1`` (``t0 = config.first_obs``), observations ``t0..T`` are conditioned
on, and the target regime is at ``T + 1``, reached through ``Q(z_T)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericError, SizeError
from .filter import Dataset, InitRule, forward_filter
from .model import ModelConfig, ParamVector, emission_terms, log_transition_matrices, q_lower_bound

ENUM_LIMIT = 2**22


def product_bound(z_path, params: ParamVector) -> float:
    """``prod_n (1 - q(z_n))`` over the path; 1 for an empty path."""
    z = np.asarray(z_path, dtype=float).ravel()
    if z.size == 0:
        return 1.0
    return float(np.prod(1.0 - q_lower_bound(z, params)))


def dobrushin_of_kernel(P: np.ndarray) -> float:
    """Half the largest l1 distance between two rows of a stochastic matrix."""
    P = np.asarray(P, dtype=float)
    K = P.shape[0]
    best = 0.0
    for a in range(K):
        for b in range(a + 1, K):
            best = max(best, 0.5 * float(np.abs(P[a] - P[b]).sum()))
    return best


def _segment_logs(data: Dataset, params: ParamVector, config: ModelConfig):
    params.check(config)
    t0 = config.first_obs
    if data.y.shape[0] < t0:
        raise SizeError(f"segment needs at least {t0} points")
    logE = emission_terms(data.y, data.z, params, config, derivatives=False).logdens
    # logQ[i] moves index t0-1+i to t0+i; the last one moves T to T+1
    logQ = log_transition_matrices(data.z[t0 - 1 :], params)
    return logE, logQ


def _paths(K, length):
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(K), repeat=length)), dtype=np.int64)


def _logsumexp_rows(a, axis):
    mx = np.max(a, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return np.squeeze(mx, axis) + np.log(np.sum(np.exp(a - mx), axis=axis))


def conditional_target_law(data: Dataset, params: ParamVector, config: ModelConfig) -> np.ndarray:
    """Row ``b``: ``P(S_{T+1} = . | S_{t0-1} = b, X_{t0-1..T})`` by path enumeration."""
    logE, logQ = _segment_logs(data, params, config)
    n, K = logE.shape
    if K ** (n + 2) > ENUM_LIMIT:
        raise SizeError(f"{K}^{n + 2} terms exceed the enumeration guard {ENUM_LIMIT}")
    paths = _paths(K, n + 1)  # interior states then the target
    out = np.empty((K, K))
    for b in range(K):
        prev = np.full(paths.shape[0], b)
        lw = np.zeros(paths.shape[0])
        for i in range(n):
            cur = paths[:, i]
            lw += logQ[i, prev, cur] + logE[i, cur]
            prev = cur
        lw += logQ[n, prev, paths[:, n]]
        total = _logsumexp_rows(lw[None], 1)[0]
        if not np.isfinite(total):
            raise NumericError(f"zero conditional mass for initial regime {b}")
        w = np.exp(lw - total)
        out[b] = np.bincount(paths[:, n], weights=w, minlength=K)
    return out


def exact_conditional_tv(data: Dataset, params: ParamVector, config: ModelConfig) -> float:
    """Largest l1 distance between target laws started from two different regimes."""
    law = conditional_target_law(data, params, config)
    K = law.shape[0]
    best = 0.0
    for a in range(K):
        for b in range(a + 1, K):
            best = max(best, float(np.abs(law[a] - law[b]).sum()))
    return best


def conditional_step_kernel(data: Dataset, params: ParamVector, config: ModelConfig, step: int) -> np.ndarray:
    """``P(S_{l+1} = . | S_l = ., X)`` for ``l = t0 - 1 + step``, computed by enumeration.

    Given ``S_l`` only the observations after ``l`` matter; their likelihood
    for each value of ``S_{l+1}`` is summed over every continuation path.
    """
    logE, logQ = _segment_logs(data, params, config)
    n, K = logE.shape
    if not 0 <= step <= n:
        raise IndexError(f"step must lie in 0..{n}")
    rest = n - step  # observed states from l+1 onward
    if K ** (rest + 1) > ENUM_LIMIT:
        raise SizeError(f"{K}^{rest + 1} terms exceed the enumeration guard {ENUM_LIMIT}")
    log_future = np.zeros(K)
    if rest > 0:
        paths = _paths(K, rest)
        lw = np.zeros(paths.shape[0])
        for k in range(rest):
            i = step + k
            cur = paths[:, k]
            lw += logE[i, cur]
            if k > 0:
                lw += logQ[i, paths[:, k - 1], cur]
        for b in range(K):
            sel = paths[:, 0] == b
            log_future[b] = _logsumexp_rows(lw[sel][None], 1)[0]
    la = logQ[step] + log_future[None, :]
    norm = _logsumexp_rows(la, 1)
    if not np.all(np.isfinite(norm)):
        raise NumericError("zero conditional mass in step kernel")
    return np.exp(la - norm[:, None])


def dobrushin_coefficient(data: Dataset, params: ParamVector, config: ModelConfig, step: int) -> float:
    """Dobrushin coefficient of the data-conditioned one-step regime kernel at ``step``."""
    return dobrushin_of_kernel(conditional_step_kernel(data, params, config, step))


@dataclass
class MixingReport:
    """Per-instance bound checks.

    ``bound_satisfied`` compares the total-variation distance (half the l1
    distance) with the product bound, which is what chaining the per-step
    Dobrushin coefficients yields. ``l1_satisfied`` records the stricter
    comparison of the full l1 distance with the same bound.
    """

    records: list[dict] = field(default_factory=list)
    tol: float = 1e-10

    @property
    def max_violation(self) -> float:
        keys = ("tv_excess", "dobrushin_excess", "chain_excess")
        return max((max(r[k] for k in keys) for r in self.records), default=-np.inf)

    @property
    def n_violations(self) -> int:
        return sum(not r["bound_satisfied"] for r in self.records)

    @property
    def n_l1_violations(self) -> int:
        return sum(not r["l1_satisfied"] for r in self.records)

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def check_instance(data: Dataset, params: ParamVector, config: ModelConfig, tol: float = 1e-10) -> dict:
    """Evaluate the full-segment bound, per-step coefficients and their chain product."""
    t0 = config.first_obs
    zpath = data.z[t0 - 1 :]
    bound = product_bound(zpath, params)
    l1 = exact_conditional_tv(data, params, config)
    n_steps = zpath.size
    coefs = np.array([dobrushin_coefficient(data, params, config, k) for k in range(n_steps)])
    qs = q_lower_bound(zpath, params)
    chain = float(np.prod(coefs))
    tv_excess = 0.5 * l1 - bound
    dob_excess = float(np.max(coefs - (1.0 - qs)))
    chain_excess = 0.5 * l1 - chain
    return dict(
        segment_length=int(n_steps),
        product_bound=bound,
        exact_l1=l1,
        exact_tv=0.5 * l1,
        dobrushin_product=chain,
        tv_excess=float(tv_excess),
        l1_excess=float(l1 - bound),
        dobrushin_excess=dob_excess,
        chain_excess=float(chain_excess),
        bound_satisfied=bool(tv_excess <= tol and dob_excess <= tol and chain_excess <= tol),
        l1_satisfied=bool(l1 - bound <= tol),
    )


def random_mixing_check(n_instances: int = 500, seed: int = 0, max_steps: int = 11,
                        config: ModelConfig | None = None, tol: float = 1e-10) -> MixingReport:
    """Check the bounds on random parameter draws and simulated segments.

    Parameters are drawn around the Monte Carlo design (stay logits in
    ``[-1, 4]``, slopes in ``[-2, 2]``) and segments of ``m + j + 1 <= max_steps``
    transitions (``m + j <= max_steps - 1``) are simulated from the joint model.
    """
    from .model import design_params
    from .simulate import DgpSpec, simulate_dgp

    config = config or ModelConfig("partial")
    K = config.n_regimes
    pz = max(config.ar_order_z, 1)
    rng = np.random.default_rng(seed)
    report = MixingReport(tol=tol)
    base = design_params(0.0)
    for i in range(n_instances):
        trans = np.empty((K, K - 1, 2))
        trans[..., 0] = rng.uniform(-1.0, 4.0, size=(K, K - 1))
        trans[..., 1] = rng.uniform(-2.0, 2.0, size=(K, K - 1))
        full = ParamVector(
            mu=np.sort(rng.uniform(-2.0, 2.0, size=config.n_block("mu")))[::-1],
            phi=rng.uniform(-0.9, 0.9, size=(config.n_block("phi"), config.ar_order_y)),
            sigma=rng.uniform(0.3, 2.0, size=config.n_block("sigma")),
            trans=trans,
            mu_z=base.mu_z,
            psi=np.full(pz, 0.8 / pz),
            sigma_z=base.sigma_z,
            rho=float(rng.uniform(-0.9, 0.9)),
        )
        n_steps = int(rng.integers(1, max_steps + 1))
        data = simulate_dgp(DgpSpec(full, T=config.first_obs + max_steps, burnin=20, seed=seed, rep_index=i))
        data = data.segment(0, config.first_obs + n_steps - 1)
        params = full if config.is_joint else full.as_partial()
        rec = check_instance(data, params, config, tol)
        rec["instance"] = i
        report.records.append(rec)
    return report


@dataclass
class ForgettingCurve:
    """Per-step log-likelihood gap between two initial rules and the mixing bound."""

    t: np.ndarray
    diff: np.ndarray
    bound: np.ndarray
    constant: float
    log_rate: float

    def first_below(self, level: float) -> int | None:
        """Smallest ``t`` after which every difference stays below ``level``."""
        above = np.nonzero(self.diff >= level)[0]
        if above.size == 0:
            return int(self.t[0])
        if above[-1] + 1 >= self.t.size:
            return None
        return int(self.t[above[-1] + 1])

    @property
    def dominated(self) -> bool:
        return bool(np.all(self.diff <= self.constant * self.bound * (1 + 1e-9) + 1e-300))


def init_forgetting_curve(data: Dataset, params: ParamVector, config: ModelConfig,
                          init_a: InitRule, init_b: InitRule, floor: float = 1e-14) -> ForgettingCurve:
    """Absolute step log-likelihood differences under two initial rules.

    ``constant`` is the smallest ``C`` with ``diff <= C * bound`` over the
    sample; ``log_rate`` is the least-squares slope of ``log(diff)`` against
    ``t`` over points above ``floor`` (negative means geometric decay).
    """
    fa = forward_filter(data, params, config, init_a)
    fb = forward_filter(data, params, config, init_b)
    diff = np.abs(fa.step_loglik - fb.step_loglik)
    t0 = config.first_obs
    t = np.arange(t0, t0 + diff.size)
    one_minus_q = 1.0 - q_lower_bound(data.z[t0 - 1 : -1], params)
    bound = np.cumprod(one_minus_q)
    pos = bound > 0
    constant = float(np.max(diff[pos] / bound[pos])) if np.any(pos) else 0.0
    sel = diff > floor
    if np.count_nonzero(sel) >= 2:
        log_rate = float(np.polyfit(t[sel], np.log(diff[sel]), 1)[0])
    else:
        log_rate = float("-inf")
    return ForgettingCurve(t, diff, bound, constant, log_rate)
