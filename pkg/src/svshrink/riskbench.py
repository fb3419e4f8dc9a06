"""Monte Carlo risk curves over a grid of singular values."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators as est
from .matnorm import ModelSpec, replication_rng
from .predictive import kl_losses
from .priors import Stein, Svs, Uniform
from .zonal import DEFAULT_CONTROL, SeriesControl

ESTIMATION, PREDICTION = "estimation", "prediction"
ESTIMATION_METHODS = ("mle", "stein", "svs", "em", "js")
PREDICTION_METHODS = ("uniform", "stein", "svs")
DEFAULT_GRID = tuple(float(v) for v in range(0, 21, 2))
CSV_HEADER = ("grid_value", "method", "mean_risk", "std_error", "replications", "flags")
CHUNK = 500


@dataclass(frozen=True)
class RiskExperiment:
    """One risk curve: fixed singular values, one swept singular value, several methods.

    Singular-value indices are 1-based.
    """

    spec: ModelSpec
    fixed_singulars: dict
    swept_index: int
    grid: tuple = DEFAULT_GRID
    methods: tuple = ("mle", "stein", "svs")
    task: str = ESTIMATION
    replications: int = 10_000
    master_seed: int = 0
    ctrl: SeriesControl = DEFAULT_CONTROL

    def __post_init__(self):
        m = self.spec.m
        object.__setattr__(self, "fixed_singulars", {int(k): float(v) for k, v in self.fixed_singulars.items()})
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not 1 <= self.swept_index <= m:
            raise ValueError(f"swept_index must be in 1..{m}")
        expected = set(range(1, m + 1)) - {self.swept_index}
        if set(self.fixed_singulars) != expected:
            raise ValueError(f"fixed_singulars must assign exactly the indices {sorted(expected)}")
        if any(v < 0 for v in self.fixed_singulars.values()) or any(g < 0 for g in self.grid):
            raise ValueError("singular values must be nonnegative")
        if self.replications < 100:
            raise ValueError("replications must be >= 100")
        allowed = ESTIMATION_METHODS if self.task == ESTIMATION else PREDICTION_METHODS
        if self.task not in (ESTIMATION, PREDICTION):
            raise ValueError(f"unknown task {self.task!r}")
        bad = [mm for mm in self.methods if mm not in allowed]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad} for {self.task}; choose from {allowed}")

    def sigma_at(self, value: float) -> np.ndarray:
        s = np.empty(self.spec.m)
        for k, v in self.fixed_singulars.items():
            s[k - 1] = v
        s[self.swept_index - 1] = value
        return s

    @classmethod
    def from_dict(cls, d: dict) -> "RiskExperiment":
        """Build from a JSON-style dictionary, optionally starting from ``"preset"``."""
        d = dict(d)
        base = preset(d.pop("preset")) if "preset" in d else None
        if base is None:
            spec = ModelSpec(int(d.pop("n")), int(d.pop("m")), float(d.pop("v1", 1.0)), float(d.pop("v2", 1.0)))
            kw = {"spec": spec}
        else:
            spec_kw = {k: d.pop(k) for k in ("n", "m", "v1", "v2") if k in d}
            kw = {"spec": replace(base.spec, **spec_kw)} if spec_kw else {}
        ctrl_kw = {k: d.pop(k) for k in ("max_order", "rel_tol") if k in d}
        for key in ("fixed_singulars", "swept_index", "grid", "methods", "task", "replications", "master_seed"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown experiment fields: {sorted(d)}")
        if ctrl_kw:
            kw["ctrl"] = replace(base.ctrl if base else DEFAULT_CONTROL, **ctrl_kw)
        return replace(base, **kw) if base else cls(**kw)

    def to_dict(self) -> dict:
        s = self.spec
        return {"n": s.n, "m": s.m, "v1": s.v1, "v2": s.v2, "task": self.task,
                "fixed_singulars": {str(k): v for k, v in self.fixed_singulars.items()},
                "swept_index": self.swept_index, "grid": list(self.grid), "methods": list(self.methods),
                "replications": self.replications, "master_seed": self.master_seed,
                "max_order": self.ctrl.max_order, "rel_tol": self.ctrl.rel_tol}


_PRESETS = {
    1: (4, 2, {1: 20.0}, 2),
    2: (4, 2, {2: 0.0}, 1),
    3: (5, 3, {1: 5.0, 3: 0.0}, 2),
    4: (5, 3, {2: 0.0, 3: 0.0}, 1),
}


def preset(figure: int | str, replications: int = 2000, master_seed: int = 1) -> RiskExperiment:
    """Configurations of the published risk figures 1-8 (1-4 estimation, 5-8 prediction)."""
    k = int(str(figure).lower().removeprefix("fig"))
    if not 1 <= k <= 8:
        raise ValueError("figure must be 1..8")
    n, m, fixed, swept = _PRESETS[(k - 1) % 4 + 1]
    task = ESTIMATION if k <= 4 else PREDICTION
    methods = ("mle", "stein", "svs") if task == ESTIMATION else ("uniform", "stein", "svs")
    return RiskExperiment(ModelSpec(n, m), fixed, swept, DEFAULT_GRID, methods, task, replications, master_seed)


def mean_from_singulars(spec: ModelSpec, sigma) -> np.ndarray:
    """``diag(sigma)`` embedded in the top ``m x m`` block of an ``n x m`` zero matrix."""
    s = np.asarray(sigma, dtype=float)
    if s.shape != (spec.m,):
        raise ValueError(f"need {spec.m} singular values")
    if np.any(s < 0):
        raise ValueError("singular values must be nonnegative")
    out = np.zeros(spec.shape)
    out[np.arange(spec.m), np.arange(spec.m)] = s
    return out


@dataclass(frozen=True)
class RiskRow:
    grid_value: float
    method: str
    mean_risk: float
    std_error: float
    replications: int
    flags: str = ""


@dataclass
class RiskTable:
    """Rows sorted by ``(grid_value, method)``; per-replication losses kept for paired comparisons."""

    rows: list
    losses: dict = field(default_factory=dict, repr=False)

    def row(self, grid_value: float, method: str) -> RiskRow:
        for r in self.rows:
            if r.grid_value == grid_value and r.method == method:
                return r
        raise KeyError((grid_value, method))

    def paired_difference(self, grid_value: float, a: str, b: str) -> tuple[float, float]:
        """Mean and standard error of ``loss_a - loss_b`` over common draws."""
        d = self.losses[(grid_value, a)] - self.losses[(grid_value, b)]
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([repr(r.grid_value), r.method, repr(r.mean_risk), repr(r.std_error), r.replications, r.flags])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> list[str]:
        lines = []
        for method in sorted({r.method for r in self.rows}):
            rs = [r for r in self.rows if r.method == method]
            risks = [r.mean_risk for r in rs]
            nflag = sum(1 for r in rs if r.flags)
            lines.append(f"{method}: risk range [{min(risks):.4f}, {max(risks):.4f}] over {len(rs)} grid points"
                         + (f", {nflag} flagged" if nflag else ""))
        return lines


def _draws(exp: RiskExperiment, gidx: int, count: int) -> np.ndarray:
    """Standard normal noise for each replication, ``count`` matrices per replication."""
    shape = (count,) + exp.spec.shape
    return np.stack([replication_rng(exp.master_seed, gidx, r).standard_normal(shape)
                     for r in range(exp.replications)])


def _estimation_losses(exp: RiskExperiment, method: str, x: np.ndarray, truth: np.ndarray):
    spec, v = exp.spec, exp.spec.v1
    reps = x.shape[0]
    ok = np.ones(reps, bool)
    terms = np.zeros(reps, int)
    if method == "mle":
        out = x
    elif method in ("svs", "stein"):
        kind = Svs if method == "svs" else Stein
        out = np.empty_like(x)
        for s in range(0, reps, CHUNK):
            e, c, t = est.bayes_terms(kind, spec, x[s:s + CHUNK], v, exp.ctrl)
            out[s:s + CHUNK], ok[s:s + CHUNK], terms[s:s + CHUNK] = e, c, t
    elif method == "em":
        out = np.stack([est.efron_morris(spec, xi, v).estimate for xi in x])
    else:
        out = np.stack([est.james_stein(spec, xi, v).estimate for xi in x])
    return est.frobenius_loss(out, truth), ok, terms


def _prediction_losses(exp: RiskExperiment, method: str, y, yf, truth):
    kind = {"uniform": Uniform, "stein": Stein, "svs": Svs}[method]
    reps = y.shape[0]
    loss = np.empty(reps)
    ok = np.ones(reps, bool)
    terms = np.zeros(reps, int)
    for s in range(0, reps, CHUNK):
        sl = slice(s, s + CHUNK)
        loss[sl], ok[sl], terms[sl] = kl_losses(kind, exp.spec, truth, y[sl], yf[sl], exp.ctrl)
    return loss, ok, terms


def _run(exp: RiskExperiment, task: str) -> RiskTable:
    if exp.task != task:
        raise ValueError(f"experiment task is {exp.task!r}, expected {task!r}")
    spec = exp.spec
    rows, losses = [], {}
    for gidx, value in enumerate(exp.grid):
        truth = mean_from_singulars(spec, exp.sigma_at(value))
        if task == ESTIMATION:
            z = _draws(exp, gidx, 1)
            x = truth + np.sqrt(spec.v1) * z[:, 0]
        else:
            z = _draws(exp, gidx, 2)
            x = truth + np.sqrt(spec.v1) * z[:, 0]
            xf = truth + np.sqrt(spec.v2) * z[:, 1]
        for method in exp.methods:
            if task == ESTIMATION:
                loss, ok, terms = _estimation_losses(exp, method, x, truth)
            else:
                loss, ok, terms = _prediction_losses(exp, method, x, xf, truth)
            bad = int(np.sum(~ok))
            flags = f"unconverged={bad};max_terms={int(terms.max())}" if bad else ""
            losses[(value, method)] = loss
            rows.append(RiskRow(value, method, float(np.mean(loss)),
                                float(np.std(loss, ddof=1) / np.sqrt(loss.size)), int(loss.size), flags))
    rows.sort(key=lambda r: (r.grid_value, r.method))
    return RiskTable(rows, losses)


def run_estimation_experiment(exp: RiskExperiment) -> RiskTable:
    """Frobenius risk of each method at each grid point, with common random numbers."""
    return _run(exp, ESTIMATION)


def run_prediction_experiment(exp: RiskExperiment) -> RiskTable:
    """Kullback-Leibler risk of each predictive density at each grid point."""
    return _run(exp, PREDICTION)


def run_experiment(exp: RiskExperiment) -> RiskTable:
    return _run(exp, exp.task)


def load_experiment(path) -> RiskExperiment:
    with open(path) as fh:
        return RiskExperiment.from_dict(json.load(fh))
