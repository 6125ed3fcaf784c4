"""Data files and run configuration documents.

Data files are CSV with header ``t,y,z`` or ``t,y,z,s_true``; floats are
written with 17 significant digits so a write/read round trip is exact.

Run configurations are YAML documents with the optional top-level sections
``model``, ``fit``, ``dgp``, ``mc`` and ``mixing``. Every key is checked
against :data:`SCHEMA`; unknown keys and wrongly typed values are rejected
with their dotted key path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .estimate import FitOptions
from .exceptions import DomainError, TVTPError
from .filter import Dataset, InitRule
from .mc import MCDesign
from .model import ModelConfig, ParamVector, design_params
from .simulate import DgpSpec


class InputError(TVTPError, ValueError):
    """Malformed data file or configuration document."""


# --- CSV ---------------------------------------------------------------------


def write_csv(data: Dataset, path) -> None:
    """Write ``t,y,z[,s_true]`` rows, one per time index starting at 0."""
    with_s = data.s_true is not None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y", "z", "s_true"] if with_s else ["t", "y", "z"])
        for t in range(data.T + 1):
            row = [str(t), format(float(data.y[t]), ".17g"), format(float(data.z[t]), ".17g")]
            if with_s:
                row.append(str(int(data.s_true[t])))
            w.writerow(row)


def read_csv(path) -> Dataset:
    """Read a data file; errors name the offending row and column."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open data file {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header not in (["t", "y", "z"], ["t", "y", "z", "s_true"]):
            raise InputError(f"{path}: header must be 't,y,z' or 't,y,z,s_true', got {','.join(header)!r}")
        cols: dict[str, list] = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            for name, cell in zip(header, row):
                cell = cell.strip()
                try:
                    if name in ("t", "s_true"):
                        v = int(cell)
                    else:
                        v = float(cell)
                        if not np.isfinite(v):
                            raise ValueError
                except ValueError:
                    raise InputError(f"{path}: row {lineno}, column '{name}': cannot parse {cell!r}") from None
                cols[name].append(v)
    t = np.asarray(cols["t"], dtype=np.int64)
    if t.size == 0:
        raise InputError(f"{path}: no data rows")
    if not np.array_equal(t, np.arange(t.size)):
        bad = int(np.nonzero(t != np.arange(t.size))[0][0])
        raise InputError(f"{path}: row {bad + 2}, column 't': expected {bad}, got {t[bad]}")
    s = np.asarray(cols["s_true"], dtype=np.int64) if "s_true" in cols else None
    return Dataset(np.asarray(cols["y"]), np.asarray(cols["z"]), s)


# --- configuration schema ------------------------------------------------------

NUM = (int, float)
LIST = (list,)

# leaf: (accepted types, default); nested dicts are sections
SCHEMA: dict[str, Any] = {
    "model": {
        "variant": ((str,), "partial"),
        "n_regimes": ((int,), 2),
        "ar_order_y": ((int,), 1),
        "ar_order_z": ((int,), 1),
        "switching": (LIST, ["mu", "sigma"]),
    },
    "fit": {
        "grad_tol": (NUM, 1e-8),
        "max_iter": ((int,), 500),
        "hac": ((str, int, type(None)), None),
        "init": ((str,), "stationary"),
        "gradient": ((str,), "analytic"),
    },
    "dgp": {
        "T": ((int,), 200),
        "burnin": ((int,), 100),
        "y0": (NUM, 0.5),
        "z0": (NUM, 1.0),
        "seed": ((int,), 0),
        "rep_index": ((int,), 0),
        "cell_index": ((int,), 0),
        "params": {
            "mu": (LIST, None),
            "phi": (LIST + NUM, None),
            "sigma": (LIST, None),
            "alpha": (LIST, None),
            "beta": (LIST, None),
            "trans": (LIST, None),
            "mu_z": (NUM, None),
            "psi": (LIST + NUM, None),
            "sigma_z": (NUM, None),
            "rho": (NUM, None),
        },
    },
    "mc": {
        "rho_grid": (LIST, [0.8]),
        "T_grid": (LIST, [800]),
        "n_reps": ((int,), 200),
        "estimators": (LIST, ["partial", "joint"]),
        "level": (NUM, 0.05),
        "master_seed": ((int,), 12345),
        "full_starts": ((bool,), False),
    },
    "mixing": {
        "n_instances": ((int,), 500),
        "seed": ((int,), 0),
        "max_steps": ((int,), 11),
        "tol": (NUM, 1e-10),
    },
}

# keys that must be present for each command
REQUIRED = {
    "simulate": ["dgp.T"],
    "fit": [],
    "mc": ["mc.n_reps"],
    "mixing-check": [],
}


def _type_name(types) -> str:
    names = {int: "integer", float: "number", str: "string", list: "list", bool: "boolean", type(None): "null"}
    return " or ".join(dict.fromkeys(names[t] for t in types))


def _validate(doc, schema, path: str) -> dict:
    if not isinstance(doc, dict):
        raise InputError(f"{path or 'config'}: expected a mapping")
    out = {}
    for key, value in doc.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise InputError(f"unknown key '{where}'")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = _validate(value if value is not None else {}, spec, where)
            continue
        types, _ = spec
        # bool is an int subclass; only accept it where booleans are expected
        if isinstance(value, bool) and bool not in types:
            raise InputError(f"'{where}' must be {_type_name(types)}, got boolean")
        if not isinstance(value, types):
            raise InputError(f"'{where}' must be {_type_name(types)}, got {type(value).__name__}")
        out[key] = value
    for key, spec in schema.items():
        if key in out:
            continue
        out[key] = _validate({}, spec, "") if isinstance(spec, dict) else spec[1]
    return out


def _present(doc: dict, dotted: str) -> bool:
    node: Any = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return False
        node = node[part]
    return True


@dataclass
class RunConfig:
    """Validated run configuration with defaults filled in."""

    raw: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict | None, command: str | None = None) -> "RunConfig":
        doc = {} if doc is None else doc
        values = _validate(doc, SCHEMA, "")
        for key in REQUIRED.get(command, []):
            if not _present(doc, key):
                raise InputError(f"missing required key '{key}'")
        cfg = cls(doc, values)
        cfg.model_config()  # surface shape errors early
        return cfg

    @classmethod
    def load(cls, path, command: str | None = None) -> "RunConfig":
        if path is None:
            return cls.from_dict({}, command)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise InputError(f"{path}: invalid YAML: {exc}") from exc
        return cls.from_dict(doc, command)

    def _wrap(self, where: str, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except (DomainError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{where}: {exc}") from exc

    def model_config(self, variant: str | None = None) -> ModelConfig:
        m = self.values["model"]
        return self._wrap("model", ModelConfig, variant or m["variant"], m["n_regimes"], m["ar_order_y"],
                          m["ar_order_z"], frozenset(m["switching"]))

    def fit_options(self, n_jobs: int = 1) -> FitOptions:
        f = self.values["fit"]
        init = {"uniform": InitRule.uniform, "stationary": InitRule.stationary}.get(f["init"])
        if init is None:
            raise InputError(f"'fit.init' must be 'uniform' or 'stationary', got {f['init']!r}")
        return self._wrap("fit", FitOptions, grad_tol=float(f["grad_tol"]), max_iter=f["max_iter"], hac=f["hac"],
                          init=init(), gradient=f["gradient"], n_jobs=n_jobs)

    def true_params(self) -> ParamVector:
        """Default design values, overridden key by key by ``dgp.params``."""
        given = {k: v for k, v in self.values["dgp"]["params"].items() if v is not None}
        base = design_params(0.0)
        if "trans" in given and ("alpha" in given or "beta" in given):
            raise InputError("'dgp.params': give either 'trans' or 'alpha'/'beta', not both")
        if "trans" in given:
            trans = np.asarray(given["trans"], dtype=float)
        else:
            trans = base.trans.copy()
            if "alpha" in given or "beta" in given:
                alpha = given.get("alpha", trans[:, 0, 0].tolist())
                beta = given.get("beta", trans[:, 0, 1].tolist())
                if len(alpha) != len(beta):
                    raise InputError("'dgp.params.alpha' and 'dgp.params.beta' must have equal length")
                trans = np.column_stack([alpha, beta]).astype(float).reshape(len(alpha), 1, 2)
        phi = np.asarray(given.get("phi", base.phi), dtype=float)
        phi = phi.reshape(1, -1) if phi.ndim < 2 else phi
        return self._wrap(
            "dgp.params",
            ParamVector,
            mu=np.asarray(given.get("mu", base.mu), dtype=float),
            phi=phi,
            sigma=np.asarray(given.get("sigma", base.sigma), dtype=float),
            trans=trans,
            mu_z=float(given.get("mu_z", base.mu_z)),
            psi=np.atleast_1d(np.asarray(given.get("psi", base.psi), dtype=float)),
            sigma_z=float(given.get("sigma_z", base.sigma_z)),
            rho=float(given.get("rho", base.rho)),
        )

    def dgp_spec(self, seed: int | None = None) -> DgpSpec:
        d = self.values["dgp"]
        return self._wrap(
            "dgp", DgpSpec, params=self.true_params(), T=d["T"], burnin=d["burnin"], y0=float(d["y0"]),
            z0=float(d["z0"]), seed=d["seed"] if seed is None else seed, rep_index=d["rep_index"],
            cell_index=d["cell_index"],
        )

    def mc_design(self, seed: int | None = None, n_workers: int = 1) -> MCDesign:
        m = self.values["mc"]
        d = self.values["dgp"]
        f = self.values["fit"]
        for key in ("rho_grid", "T_grid", "estimators"):
            if not m[key]:
                raise InputError(f"'mc.{key}' must be non-empty")
        return self._wrap(
            "mc", MCDesign, truth=self.true_params(), rho_grid=m["rho_grid"], T_grid=m["T_grid"],
            n_reps=m["n_reps"], estimators=m["estimators"], level=float(m["level"]),
            master_seed=m["master_seed"] if seed is None else seed, burnin=d["burnin"], y0=float(d["y0"]),
            z0=float(d["z0"]), full_starts=m["full_starts"], grad_tol=float(f["grad_tol"]),
            max_iter=f["max_iter"], n_workers=n_workers,
        )
