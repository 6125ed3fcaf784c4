"""Monte Carlo harness: simulate, fit partial and joint estimators, summarize.

Each replication draws one dataset per ``(rho, T)`` cell, shared by all
estimators. Streams are keyed by ``(master_seed, cell, rep)``, so results do
not depend on worker count or completion order.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .estimate import EstimationResult, FitOptions, default_starts, fit, perturbed_starts
from .exceptions import DomainError, TVTPError
from .filter import Dataset
from .model import ModelConfig, ParamVector, Variant, design_params, swap_permutation
from .simulate import DgpSpec, simulate_dgp

logger = logging.getLogger(__name__)

# column order of the summary tables
TABLE_ORDER = ["mu0", "mu1", "alpha1", "beta1", "alpha0", "beta0", "sigma0", "sigma1", "phi1"]
LOW_PRECISION_REPS = 50


@dataclass
class MCDesign:
    """Monte Carlo grid.

    ``truth`` holds the joint parameters; its ``rho`` is replaced by each
    value of ``rho_grid``.
    """

    truth: ParamVector = field(default_factory=lambda: design_params(0.0))
    rho_grid: Sequence[float] = (0.8,)
    T_grid: Sequence[int] = (800,)
    n_reps: int = 200
    estimators: Sequence[str] = ("partial", "joint")
    level: float = 0.05
    master_seed: int = 12345
    burnin: int = 100
    y0: float = 0.5
    z0: float = 1.0
    full_starts: bool = False
    grad_tol: float = 1e-8
    max_iter: int = 500
    n_workers: int = 1

    def __post_init__(self):
        if self.n_reps < 1:
            raise DomainError("n_reps must be >= 1")
        if not 0 < self.level < 1:
            raise DomainError("level must lie in (0, 1)")
        if not self.truth.is_joint:
            raise DomainError("truth must be the joint parameter vector")
        self.estimators = tuple(Variant(e).value for e in self.estimators)
        self.rho_grid = tuple(float(r) for r in self.rho_grid)
        self.T_grid = tuple(int(t) for t in self.T_grid)
        if not self.estimators or not self.rho_grid or not self.T_grid:
            raise DomainError("estimators, rho_grid and T_grid must be non-empty")

    @property
    def critical_value(self) -> float:
        return float(norm.ppf(1.0 - self.level / 2.0))

    def truth_at(self, rho: float) -> ParamVector:
        return replace(self.truth, rho=rho)

    def config(self, estimator: str) -> ModelConfig:
        t = self.truth
        return ModelConfig(estimator, t.n_regimes, t.phi.shape[1], t.psi.shape[0])

    def dgp(self, rho_i: int, T_i: int, rep: int) -> DgpSpec:
        return DgpSpec(
            params=self.truth_at(self.rho_grid[rho_i]),
            T=self.T_grid[T_i],
            burnin=self.burnin,
            y0=self.y0,
            z0=self.z0,
            seed=self.master_seed,
            cell_index=rho_i * len(self.T_grid) + T_i,
            rep_index=rep,
        )


def relabel(result: EstimationResult) -> EstimationResult:
    """Order regimes so that ``mu0 >= mu1``; covariances are permuted to match."""
    config = result.config
    if config.n_regimes != 2 or "mu" not in config.switching:
        return result
    mu = result.theta_hat.mu
    if mu[0] >= mu[1]:
        return result
    perm = swap_permutation(config)

    def pm(a):
        return None if a is None else a[np.ix_(perm, perm)]

    return replace(
        result,
        theta_hat=ParamVector.from_flat(config, result.params[perm]),
        hessian=pm(result.hessian),
        cov_hessian=pm(result.cov_hessian),
        cov_sandwich=pm(result.cov_sandwich),
    )


def fit_replication(data: Dataset, config: ModelConfig, truth: ParamVector, design: MCDesign) -> EstimationResult:
    """Default estimator: multi-start fit seeded with the true value."""
    starts = [truth] + perturbed_starts(truth, config, coordinatewise=False)
    if design.full_starts:
        starts += default_starts(data, config)
    return fit(data, config, FitOptions(starts=starts, grad_tol=design.grad_tol, max_iter=design.max_iter))


def _run_unit(args):
    design, rho_i, T_i, rep, estimator_fn = args
    data = simulate_dgp(design.dgp(rho_i, T_i, rep))
    truth_full = design.truth_at(design.rho_grid[rho_i])
    out = []
    for est in design.estimators:
        config = design.config(est)
        truth = truth_full if est == "joint" else truth_full.as_partial()
        rec = dict(estimator=est, rho=design.rho_grid[rho_i], T=design.T_grid[T_i], rep=rep)
        try:
            res = estimator_fn(data, config, truth, design)
        except TVTPError as exc:
            logger.info("rep %d %s failed: %s", rep, est, exc)
            rec.update(ok=False, converged=False, relabeled=False, estimate=None, se=None, se_sandwich=None)
            out.append(rec)
            continue
        fixed = relabel(res)
        rec.update(
            ok=bool(res.converged and fixed.se_hessian is not None),
            converged=bool(res.converged),
            relabeled=fixed is not res,
            estimate=fixed.params,
            se=fixed.se_hessian,
            se_sandwich=fixed.se_sandwich,
            names=config.param_names(),
            truth=truth.to_flat(),
        )
        out.append(rec)
    return (rho_i, T_i, rep), out


@dataclass
class MCReport:
    """One row per (estimator, rho, T, parameter)."""

    rows: list[dict]
    records: list[dict] = field(default_factory=list, repr=False)

    def get(self, estimator: str, rho: float, T: int, parameter: str) -> dict:
        for r in self.rows:
            if (r["estimator"], r["rho"], r["T"], r["parameter"]) == (estimator, rho, T, parameter):
                return r
        raise KeyError((estimator, rho, T, parameter))

    def to_csv(self, path=None) -> str:
        cols = [
            "estimator", "rho", "T", "parameter", "truth", "bias", "sd_ratio", "size", "power",
            "size_sandwich", "n_converged", "n_reps", "n_relabeled", "low_precision", "boundary", "valid",
        ]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r.get(k)) for k in cols})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_table(self) -> str:
        """Plain-text table grouped as Bias, sd/SE ratio, size and power rows, one block per estimator and rho."""
        lines = []
        keys = sorted({(r["estimator"], r["rho"]) for r in self.rows}, key=lambda k: (k[1], k[0] != "partial"))
        for est, rho in keys:
            sub = [r for r in self.rows if r["estimator"] == est and r["rho"] == rho]
            params = [p for p in TABLE_ORDER if any(r["parameter"] == p for r in sub)]
            params += [p for p in dict.fromkeys(r["parameter"] for r in sub) if p not in params]
            Ts = sorted({r["T"] for r in sub})
            title = f"{est.capitalize()} ML (rho = {rho:g})"
            lines.append(title)
            lines.append("=" * max(len(title), 8 + 9 * len(params)))
            lines.append(f"{'T':>6}  " + "".join(f"{p:>9}" for p in params))
            for label, key in (("Bias", "bias"), ("Ratio of sampling sd to estimated SE", "sd_ratio"),
                               ("Size", "size"), ("Power", "power")):
                lines.append(label)
                for T in Ts:
                    vals = []
                    for p in params:
                        r = next((r for r in sub if r["T"] == T and r["parameter"] == p), None)
                        v = None if r is None else r.get(key)
                        vals.append(f"{v:9.3f}" if v is not None and np.isfinite(v) else f"{'-':>9}")
                    lines.append(f"{T:>6}  " + "".join(vals))
            flags = [r for r in sub if r.get("low_precision")]
            if flags:
                lines.append(f"note: low precision (fewer than {LOW_PRECISION_REPS} converged reps)")
            if any(r.get("boundary") for r in sub):
                lines.append("note: power rows for sigma test a null on the boundary; interpret with caution")
            lines.append("")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ""
    return "" if v is None else v


def summarize(records: list[dict], design: MCDesign) -> MCReport:
    """Bias, sd-to-SE ratio, size and power per cell from per-replication records.

    Size rejects ``theta_j = truth_j`` and power rejects ``theta_j = 0`` when the
    Hessian-based t statistic exceeds the two-sided normal critical value.
    Only replications that converged with usable standard errors enter.
    """
    crit = design.critical_value
    rows = []
    cells: dict = {}
    for rec in records:
        cells.setdefault((rec["estimator"], rec["rho"], rec["T"]), []).append(rec)
    for est in design.estimators:
        config = design.config(est)
        names = config.param_names()
        for rho in design.rho_grid:
            truth_full = design.truth_at(rho)
            truth = (truth_full if est == "joint" else truth_full.as_partial()).to_flat()
            for T in design.T_grid:
                recs = cells.get((est, rho, T), [])
                good = [r for r in recs if r["ok"]]
                n_ok = len(good)
                n_rel = sum(r["relabeled"] for r in recs)
                if n_ok:
                    est_m = np.array([r["estimate"] for r in good])
                    se_m = np.array([r["se"] for r in good])
                    ses = [r["se_sandwich"] for r in good]
                    sand = np.array(ses) if all(s is not None for s in ses) else None
                for j, name in enumerate(names):
                    row = dict(
                        estimator=est, rho=rho, T=T, parameter=name, truth=float(truth[j]),
                        n_converged=n_ok, n_reps=len(recs), n_relabeled=int(n_rel),
                        low_precision=n_ok < LOW_PRECISION_REPS, valid=n_ok > 0,
                        boundary=name.startswith("sigma"),
                        bias=np.nan, sd_ratio=np.nan, size=np.nan, power=np.nan, size_sandwich=np.nan,
                    )
                    if n_ok:
                        x = est_m[:, j]
                        s = se_m[:, j]
                        # shifted data keeps identical estimates at exactly zero spread
                        sd = float(np.std(x - x[0], ddof=1)) if n_ok > 1 else 0.0
                        with np.errstate(divide="ignore", invalid="ignore"):
                            row.update(
                                bias=float(np.mean(x - truth[j])),
                                sd_ratio=sd / float(s.mean()),
                                size=float(np.mean(np.abs((x - truth[j]) / s) > crit)),
                                power=float(np.mean(np.abs(x / s) > crit)),
                            )
                            if sand is not None:
                                row["size_sandwich"] = float(np.mean(np.abs((x - truth[j]) / sand[:, j]) > crit))
                    rows.append(row)
    return MCReport(rows, records)


def run_monte_carlo(design: MCDesign,
                    estimator: Callable[[Dataset, ModelConfig, ParamVector, MCDesign], EstimationResult] | None = None,
                    progress: Callable[[int, int], None] | None = None) -> MCReport:
    """Run every (rho, T, rep) unit and summarize.

    ``estimator`` defaults to :func:`fit_replication`; it must be picklable
    when ``design.n_workers > 1``.
    """
    estimator = estimator or fit_replication
    units = [
        (design, ri, ti, rep, estimator)
        for ri in range(len(design.rho_grid))
        for ti in range(len(design.T_grid))
        for rep in range(design.n_reps)
    ]
    results = {}
    if design.n_workers > 1:
        with ProcessPoolExecutor(design.n_workers) as pool:
            for i, (key, recs) in enumerate(pool.map(_run_unit, units, chunksize=4)):
                results[key] = recs
                if progress:
                    progress(i + 1, len(units))
    else:
        for i, unit in enumerate(units):
            key, recs = _run_unit(unit)
            results[key] = recs
            if progress:
                progress(i + 1, len(units))
    records = [r for key in sorted(results) for r in results[key]]
    return summarize(records, design)
