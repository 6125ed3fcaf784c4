"""Maximum-likelihood fitting, numerical derivatives and covariance estimators."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import DomainError, EstimationError, NumericError, TVTPError
from .filter import STATIONARY, Dataset, InitRule, loglik_and_score, step_logliks
from .model import (
    ModelConfig,
    ParamVector,
    check_ar_roots,
    lag_matrix,
    pack,
    unpack,
    unpack_jacobian_diag,
)

logger = logging.getLogger(__name__)

# one grid step per parameter block, in unconstrained units
GRID_STEP = {
    "mu": 0.5,
    "phi": 0.1,
    "sigma": 0.3,
    "trans": 1.0,
    "mu_z": 0.2,
    "psi": 0.1,
    "sigma_z": 0.3,
    "rho": 0.3,
}


def default_hac_lag(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


@dataclass
class FitOptions:
    """Optimizer and covariance settings.

    ``starts=None`` builds the default start set from the data (a moment-based
    anchor plus one-step coordinate perturbations of it). ``hac`` is ``None``
    for the outer-product middle matrix, ``"bartlett"`` for a Bartlett kernel
    with the automatic lag, or an integer lag.
    """

    starts: Sequence[ParamVector] | None = None
    grad_tol: float = 1e-8
    max_iter: int = 500
    fd_step: float = 1e-6
    fd_floor: float = 1e-7
    hac: str | int | None = None
    init: InitRule = STATIONARY
    n_jobs: int = 1
    gradient: str = "analytic"

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.starts is not None and len(self.starts) == 0:
            raise DomainError("starts must be non-empty")
        if self.gradient not in ("analytic", "numeric"):
            raise DomainError("gradient must be 'analytic' or 'numeric'")
        if self.hac not in (None, "bartlett") and not (isinstance(self.hac, int) and self.hac >= 0):
            raise DomainError("hac must be None, 'bartlett' or a non-negative lag")

    def hac_lag(self, n: int) -> int | None:
        if self.hac is None:
            return None
        if self.hac == "bartlett":
            return default_hac_lag(n)
        return int(self.hac)


@dataclass
class EstimationResult:
    """Point estimate with Hessian-based and sandwich covariance matrices.

    ``hessian`` is the Hessian of the total log-likelihood in natural units.
    When it is not negative definite both covariances are ``None`` and
    ``hessian_pd`` is False.
    """

    theta_hat: ParamVector
    config: ModelConfig
    loglik: float
    grad_norm: float
    hessian: np.ndarray | None
    cov_hessian: np.ndarray | None
    cov_sandwich: np.ndarray | None
    converged: bool
    start_index: int
    n_iter: int
    nobs: int
    hessian_pd: bool = True
    start_logliks: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def names(self) -> list[str]:
        return self.config.param_names()

    @property
    def se_hessian(self) -> np.ndarray | None:
        return None if self.cov_hessian is None else np.sqrt(np.clip(np.diag(self.cov_hessian), 0, None))

    @property
    def se_sandwich(self) -> np.ndarray | None:
        return None if self.cov_sandwich is None else np.sqrt(np.clip(np.diag(self.cov_sandwich), 0, None))

    @property
    def params(self) -> np.ndarray:
        return self.theta_hat.to_flat()

    def summary_rows(self) -> list[dict]:
        est = self.params
        se_h = self.se_hessian
        se_s = self.se_sandwich
        rows = []
        for j, name in enumerate(self.names):
            sh = None if se_h is None else float(se_h[j])
            rows.append(
                dict(
                    parameter=name,
                    estimate=float(est[j]),
                    se_hessian=sh,
                    se_sandwich=None if se_s is None else float(se_s[j]),
                    t_zero=None if not sh else float(est[j] / sh),
                )
            )
        return rows

    def to_dict(self) -> dict:
        def mat(a):
            return None if a is None else np.asarray(a).tolist()

        return dict(
            variant=self.config.variant.value,
            n_regimes=self.config.n_regimes,
            names=self.names,
            estimate=self.params.tolist(),
            loglik=self.loglik,
            grad_norm=self.grad_norm,
            converged=self.converged,
            hessian_pd=self.hessian_pd,
            start_index=self.start_index,
            n_iter=self.n_iter,
            nobs=self.nobs,
            hessian=mat(self.hessian),
            cov_hessian=mat(self.cov_hessian),
            cov_sandwich=mat(self.cov_sandwich),
            se_hessian=mat(self.se_hessian),
            se_sandwich=mat(self.se_sandwich),
            start_logliks=self.start_logliks,
        )


# --- numerical derivatives ---------------------------------------------------


def fd_steps(x: np.ndarray, rel_step: float, floor: float) -> np.ndarray:
    return np.maximum(rel_step * np.abs(x), floor)


def numerical_gradient(f: Callable[[np.ndarray], float], x, rel_step: float = 1e-6,
                       floor: float = 1e-7) -> np.ndarray:
    """Central-difference gradient with steps ``max(rel_step * |x_j|, floor)``."""
    x = np.asarray(x, dtype=float)
    h = fd_steps(x, rel_step, floor)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h[j]
        fp, fm = f(x + e), f(x - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite objective in the stencil of coordinate {j}")
        g[j] = (fp - fm) / (2.0 * h[j])
    return g


def numerical_jacobian(f: Callable[[np.ndarray], np.ndarray], x, rel_step: float = 1e-6,
                       floor: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape ``(len(f(x)), len(x))``."""
    x = np.asarray(x, dtype=float)
    h = fd_steps(x, rel_step, floor)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h[j]
        fp, fm = np.asarray(f(x + e)), np.asarray(f(x - e))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NumericError(f"non-finite objective in the stencil of coordinate {j}")
        cols.append((fp - fm) / (2.0 * h[j]))
    return np.stack(cols, axis=-1)


def numerical_hessian(f: Callable[[np.ndarray], float] | None, x, grad: Callable | None = None,
                      rel_step: float | None = None, floor: float = 1e-7) -> np.ndarray:
    """Symmetrized central-difference Hessian.

    With ``grad`` the Hessian is the central-difference Jacobian of the
    gradient (default relative step 1e-6). Otherwise second differences of
    ``f`` are used (default relative step 1e-4, the fourth root of machine
    precision, since the truncation/rounding trade-off differs).
    """
    x = np.asarray(x, dtype=float)
    if grad is not None:
        H = numerical_jacobian(grad, x, 1e-6 if rel_step is None else rel_step, floor)
        return 0.5 * (H + H.T)
    h = fd_steps(x, 1e-4 if rel_step is None else rel_step, max(floor, 1e-5))
    q = x.size
    H = np.empty((q, q))
    f0 = f(x)

    def ev(v, j):
        out = f(v)
        if not np.isfinite(out):
            raise NumericError(f"non-finite objective in the stencil of coordinate {j}")
        return out

    for i in range(q):
        ei = np.zeros(q)
        ei[i] = h[i]
        H[i, i] = (ev(x + ei, i) - 2.0 * f0 + ev(x - ei, i)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(q)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                ev(x + ei + ej, i) - ev(x + ei - ej, i) - ev(x - ei + ej, i) + ev(x - ei - ej, i)
            ) / (4.0 * h[i] * h[j])
    return 0.5 * (H + H.T)


# --- quasi-Newton ------------------------------------------------------------


@dataclass
class OptimizeOutcome:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    message: str
    history: list[float] = field(default_factory=list)


def _line_search(fg, x, f, g, p, c1=1e-4, shrink=0.5, max_halvings=40):
    slope = float(g @ p)
    noise = 8.0 * np.finfo(float).eps * abs(f)
    alpha = 1.0
    for _ in range(max_halvings):
        xn = x + alpha * p
        fn, gn = fg(xn)
        if np.isfinite(fn):
            if fn <= f + c1 * alpha * slope:
                return alpha, xn, fn, gn
            # f differences have reached rounding level; fall back on the slope
            if fn <= f + noise and abs(float(gn @ p)) <= 0.9 * abs(slope):
                return alpha, xn, fn, gn
        alpha *= shrink
    return None


def bfgs_minimize(fg: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, grad_tol: float = 1e-8,
                  max_iter: int = 500) -> OptimizeOutcome:
    """Minimize with BFGS inverse-Hessian updates and a backtracking line search.

    Accepted steps never increase the objective by more than a few units in
    the last place: near the optimum, where differences in ``f`` fall below
    rounding level, a step is accepted when it reduces the directional
    derivative instead. The curvature update is
    skipped when ``s'y <= 0``; on a failed line search the inverse Hessian is
    reset to a scaled identity once before giving up.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fg(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericError("objective is not finite at the starting point")
    n = x.size
    Hinv = np.eye(n)
    history = [f]
    reset = False
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= grad_tol:
            return OptimizeOutcome(x, f, g, it, True, "gradient tolerance reached", history)
        p = -Hinv @ g
        if float(g @ p) >= 0:
            Hinv = np.eye(n)
            p = -g
        step = _line_search(fg, x, f, g, p)
        if step is None:
            if reset:
                return OptimizeOutcome(x, f, g, it, False, "line search failed", history)
            Hinv = np.eye(n) / max(gnorm, 1.0)
            reset = True
            continue
        reset = False
        alpha, xn, fn, gn = step
        s = xn - x
        yv = gn - g
        sy = float(s @ yv)
        if it == 0 and sy > 0:
            Hinv = np.eye(n) * sy / float(yv @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            Hy = Hinv @ yv
            Hinv = Hinv + ((sy + yv @ Hy) * rho * rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
        x, f, g = xn, fn, gn
        history.append(f)
    gnorm = float(np.linalg.norm(g))
    return OptimizeOutcome(x, f, g, max_iter, gnorm <= grad_tol, "max_iter reached", history)


# --- objective ---------------------------------------------------------------


class Objective:
    """Negative mean log-likelihood in unconstrained coordinates."""

    def __init__(self, data: Dataset, config: ModelConfig, init: InitRule = STATIONARY,
                 gradient: str = "analytic", fd_step: float = 1e-6, fd_floor: float = 1e-7):
        self.data = data
        self.config = config
        self.init = init
        self.n = data.n_scored(config)
        self.gradient = gradient
        self.fd_step = fd_step
        self.fd_floor = fd_floor

    def value(self, raw) -> float:
        from .filter import loglik

        try:
            return -loglik(self.data, unpack(raw, self.config), self.config, self.init) / self.n
        except (DomainError, NumericError, FloatingPointError):
            return np.inf

    def __call__(self, raw) -> tuple[float, np.ndarray]:
        if self.gradient == "numeric":
            f = self.value(raw)
            if not np.isfinite(f):
                return np.inf, np.full(len(raw), np.nan)
            try:
                return f, numerical_gradient(self.value, raw, self.fd_step, self.fd_floor)
            except NumericError:
                return np.inf, np.full(len(raw), np.nan)
        try:
            params = unpack(raw, self.config)
            ll, score = loglik_and_score(self.data, params, self.config, self.init)
        except (DomainError, NumericError, FloatingPointError):
            return np.inf, np.full(len(raw), np.nan)
        if not np.isfinite(ll):
            return np.inf, np.full(len(raw), np.nan)
        return -ll / self.n, -score * unpack_jacobian_diag(raw, self.config) / self.n


# --- starting values ---------------------------------------------------------


def _ols(X: np.ndarray, y: np.ndarray):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta, y - X @ beta


def moment_anchor(data: Dataset, config: ModelConfig) -> ParamVector:
    """Cheap deterministic start: non-switching OLS fit plus a Gaussian mixture on its residuals.

    Regime means/scales come from a ``K``-component mixture of the ``Y``
    residuals (ordered by decreasing mean); transitions start at
    ``alpha = 2``, ``beta = 0``.
    """
    from sklearn.mixture import GaussianMixture

    K = config.n_regimes
    t0 = config.first_obs
    y = data.y
    Yl = lag_matrix(y, config.ar_order_y, t0)
    X = np.column_stack([np.ones(Yl.shape[0]), Yl])
    coef, resid = _ols(X, y[t0:])
    if K == 1:
        means = np.array([coef[0]])
        scales = np.array([resid.std()])
    else:
        gm = GaussianMixture(K, random_state=0, n_init=1).fit(resid[:, None])
        order = np.argsort(-gm.means_[:, 0])
        means = coef[0] + gm.means_[order, 0]
        scales = np.sqrt(gm.covariances_.reshape(K)[order])
    scales = np.maximum(scales, 1e-3 * max(resid.std(), 1e-8))
    mu = means if "mu" in config.switching else np.array([coef[0]])
    sigma = scales if "sigma" in config.switching else np.array([resid.std()])
    phi = np.tile(coef[1:], (config.n_block("phi"), 1))
    trans = np.zeros((K, max(K - 1, 0), 2))
    if K > 1:
        trans[:, 0, 0] = 2.0
    kw = {}
    if config.is_joint:
        Zl = lag_matrix(data.z, config.ar_order_z, t0)
        zc, zres = _ols(np.column_stack([np.ones(Zl.shape[0]), Zl]), data.z[t0:])
        r = float(np.corrcoef(resid, zres)[0, 1]) if zres.std() > 0 and resid.std() > 0 else 0.0
        kw = dict(mu_z=zc[0], psi=zc[1:], sigma_z=max(zres.std(), 1e-6), rho=float(np.clip(r, -0.95, 0.95)))
    return ParamVector(mu, phi, sigma, trans, **kw)


def perturbed_starts(anchor: ParamVector, config: ModelConfig, coordinatewise: bool = True,
                     signs: Sequence[int] = (1, -1)) -> list[ParamVector]:
    """Anchor shifted by one grid step.

    ``coordinatewise`` gives ``2q`` starts, one coordinate at a time; otherwise
    one start per sign with every coordinate shifted together.
    """
    raw = pack(anchor, config)
    steps = np.empty(config.n_params)
    for name, sl in config.slices().items():
        steps[sl] = GRID_STEP[name]
    out = []
    if coordinatewise:
        for j in range(config.n_params):
            for sgn in signs:
                v = raw.copy()
                v[j] += sgn * steps[j]
                out.append(unpack(v, config))
    else:
        for sgn in signs:
            out.append(unpack(raw + sgn * steps, config))
    return out


def default_starts(data: Dataset, config: ModelConfig) -> list[ParamVector]:
    anchor = moment_anchor(data, config)
    return [anchor] + perturbed_starts(anchor, config)


# --- covariance --------------------------------------------------------------


def long_run_covariance(scores: np.ndarray, lag: int | None) -> np.ndarray:
    """Mean outer product of ``scores`` (rows = time), Bartlett-weighted when ``lag`` is given."""
    n = scores.shape[0]
    B = scores.T @ scores / n
    if lag:
        for l in range(1, lag + 1):
            w = 1.0 - l / (lag + 1.0)
            G = scores[l:].T @ scores[:-l] / n
            B += w * (G + G.T)
    return 0.5 * (B + B.T)


def sandwich_from_parts(hessian: np.ndarray, n: int, scores: np.ndarray | None = None,
                        lag: int | None = None, middle: np.ndarray | None = None) -> np.ndarray:
    """``A^{-1} B A^{-1} / n`` with ``A = -hessian / n``.

    ``hessian`` is the Hessian of the total log-likelihood. ``middle``
    overrides the long-run score variance ``B`` computed from ``scores``.
    """
    A = -np.asarray(hessian) / n
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericError(f"average Hessian is singular (condition number {cond:.3g})")
    B = long_run_covariance(scores, lag) if middle is None else np.asarray(middle)
    Ainv = np.linalg.inv(A)
    V = Ainv @ B @ Ainv.T / n
    return 0.5 * (V + V.T)


def score_contributions(data: Dataset, config: ModelConfig, theta: ParamVector,
                        init: InitRule = STATIONARY, rel_step: float = 1e-6,
                        floor: float = 1e-7) -> np.ndarray:
    """Per-observation scores ``d log p_t / d theta`` by central differences, shape ``(n, q)``."""

    def f(v):
        return step_logliks(data, ParamVector.from_flat(config, v), config, init)

    return numerical_jacobian(f, theta.to_flat(), rel_step, floor)


def total_hessian(data: Dataset, config: ModelConfig, theta: ParamVector, init: InitRule = STATIONARY,
                  rel_step: float = 1e-6, floor: float = 1e-7) -> np.ndarray:
    """Hessian of the total log-likelihood: central differences of the analytic score."""

    def grad(v):
        return loglik_and_score(data, ParamVector.from_flat(config, v), config, init)[1]

    return numerical_hessian(None, theta.to_flat(), grad=grad, rel_step=rel_step, floor=floor)


def sandwich_cov(data: Dataset, config: ModelConfig, theta_hat: ParamVector, hac: int | str | None = None,
                 hessian: np.ndarray | None = None, init: InitRule = STATIONARY,
                 rel_step: float = 1e-6, floor: float = 1e-7) -> np.ndarray:
    """Misspecification-robust covariance of ``theta_hat``.

    The diagonal is on the same scale as the Hessian-based covariance, so the
    two sets of standard errors are directly comparable.
    """
    n = data.n_scored(config)
    if hessian is None:
        hessian = total_hessian(data, config, theta_hat, init, rel_step, floor)
    lag = FitOptions(hac=hac).hac_lag(n)
    scores = score_contributions(data, config, theta_hat, init, rel_step, floor)
    return sandwich_from_parts(hessian, n, scores, lag)


def hessian_cov(hessian: np.ndarray) -> np.ndarray | None:
    """``(-H)^{-1}`` when ``-H`` is positive definite, else ``None``."""
    negH = -0.5 * (hessian + hessian.T)
    try:
        L = np.linalg.cholesky(negH)
    except np.linalg.LinAlgError:
        return None
    Linv = np.linalg.inv(L)
    V = Linv.T @ Linv
    return 0.5 * (V + V.T)


# --- fitting -----------------------------------------------------------------


def _run_start(obj: Objective, start: ParamVector, options: FitOptions):
    try:
        raw0 = pack(start, obj.config)
        out = bfgs_minimize(obj, raw0, options.grad_tol, options.max_iter)
    except TVTPError as exc:
        return None, str(exc)
    if not np.isfinite(out.fun):
        return None, "non-finite objective"
    return out, out.message


def fit(data: Dataset, config: ModelConfig, options: FitOptions | None = None) -> EstimationResult:
    """Maximize the log-likelihood from every start and keep the best.

    The winner is the start with the highest log-likelihood (lowest index on
    ties). Standard errors come from the Hessian of the total log-likelihood
    in natural units and from the sandwich estimator.
    """
    options = options or FitOptions()
    data.check(config)
    starts = list(options.starts) if options.starts is not None else default_starts(data, config)
    obj = Objective(data, config, options.init, options.gradient, options.fd_step, options.fd_floor)

    if options.n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(options.n_jobs) as pool:
            runs = list(pool.map(lambda s: _run_start(obj, s, options), starts))
    else:
        runs = [_run_start(obj, s, options) for s in starts]

    best = None
    start_ll = []
    for i, (out, _) in enumerate(runs):
        ll = -out.fun * obj.n if out is not None else -np.inf
        start_ll.append(float(ll))
        if out is not None and (best is None or ll > start_ll[best]):
            best = i
    if best is None:
        raise EstimationError("every start failed", [msg for _, msg in runs])

    out = runs[best][0]
    theta = unpack(out.x, config)
    ll = -out.fun * obj.n
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        check_ar_roots(theta, config)
    grad_norm = float(np.linalg.norm(out.grad))
    try:
        H = total_hessian(data, config, theta, options.init, options.fd_step, options.fd_floor)
    except (NumericError, DomainError) as exc:
        logger.warning("Hessian evaluation failed: %s", exc)
        H = None
    cov_h = cov_s = None
    pd = False
    if H is not None:
        cov_h = hessian_cov(H)
        pd = cov_h is not None
        if pd:
            try:
                lag = options.hac_lag(obj.n)
                scores = score_contributions(data, config, theta, options.init, options.fd_step, options.fd_floor)
                cov_s = sandwich_from_parts(H, obj.n, scores, lag)
            except (NumericError, DomainError) as exc:
                logger.warning("sandwich covariance failed: %s", exc)
    return EstimationResult(
        theta_hat=theta,
        config=config,
        loglik=float(ll),
        grad_norm=grad_norm,
        hessian=H,
        cov_hessian=cov_h,
        cov_sandwich=cov_s,
        converged=out.converged,
        start_index=best,
        n_iter=out.n_iter,
        nobs=obj.n,
        hessian_pd=pd,
        start_logliks=start_ll,
        message=out.message,
    )


def t_stats(result: EstimationResult, null_values, flavor: str = "hessian") -> np.ndarray:
    """``(estimate - null) / se`` per coordinate for the chosen SE flavor."""
    se = {"hessian": result.se_hessian, "sandwich": result.se_sandwich}.get(flavor, "bad")
    if isinstance(se, str):
        raise DomainError("flavor must be 'hessian' or 'sandwich'")
    if se is None:
        raise NumericError(f"{flavor} standard errors are not available")
    if np.any(se == 0):
        raise NumericError("zero standard error")
    null = np.broadcast_to(np.asarray(null_values, dtype=float), se.shape)
    return (result.params - null) / se
