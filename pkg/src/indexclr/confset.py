"""Evaluation grids, parameter grids and test inversion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import partial
from itertools import product

import numpy as np

from indexclr import __version__
from indexclr.clr import ClrConfig, TestOutcome, clr_test
from indexclr.errors import InvalidConfigError, InvalidDataError
from indexclr.kernels import KernelConfig, resolve_leave_one_out
from indexclr.models import Dataset, ParamSpace, SignModel, sample_param
from indexclr.moments import EvalGrid
from indexclr.parallel import GRID, MULT, pmap, substream


def build_eval_grid(data: Dataset, model: SignModel, m: int, rng: np.random.Generator, approach="index") -> EvalGrid:
    """Draw ``m`` evaluation points.

    ``x`` is resampled from the dataset rows; on the index route each point
    also gets its own ``gamma`` drawn uniformly from the parameter space,
    independently of ``x`` and of the parameter under test. Contrasts are
    uniform over the model's contrast set.
    """
    if m < 1:
        raise InvalidConfigError(f"grid size must be positive, got {m}")
    if data.n == 0:
        raise InvalidDataError("dataset is empty")
    rows = rng.integers(0, data.n, size=m)
    gammas = None
    if approach == "index":
        gammas = np.array([sample_param(model.param_space, rng) for _ in range(m)])
    contrasts = [model.contrasts[k] for k in rng.integers(0, len(model.contrasts), size=m)]
    return EvalGrid(data.X[rows], gammas, contrasts, rows)


def build_param_grid(space: ParamSpace, spec) -> np.ndarray:
    """Parameter points from ``{"points": [...]}`` or ``{"lattice": counts}``.

    A lattice places ``counts[k]`` equally spaced values on the box of free
    coordinate ``k``; the first coordinate is fixed by the normalization.
    Duplicates are removed, keeping first occurrences.
    """
    if "points" in spec:
        pts = [space.validate(p) for p in spec["points"]]
    elif "lattice" in spec:
        counts = list(spec["lattice"])
        if len(counts) != space.dim - 1:
            raise InvalidConfigError(f"lattice needs {space.dim - 1} counts, got {len(counts)}")
        axes = []
        for lo, hi, k in zip(space.lower, space.upper, counts):
            if k < 1:
                raise InvalidConfigError("lattice counts must be positive")
            axes.append(np.linspace(lo, hi, k) if k > 1 else np.array([(lo + hi) / 2]))
        pts = [np.array((space.sign, *free)) for free in product(*axes)]
        pts = [p for p in pts if space.thresholds_ordered(p)]
    else:
        raise InvalidConfigError("parameter grid spec needs 'points' or 'lattice'")
    if not pts:
        raise InvalidConfigError("parameter grid is empty")
    pts = np.array(pts, dtype=float)
    _, first = np.unique(pts, axis=0, return_index=True)
    return pts[np.sort(first)]


@dataclass
class ConfidenceSet:
    param_grid: np.ndarray
    outcomes: list
    config: dict = field(default_factory=dict)

    @property
    def accepted(self) -> np.ndarray:
        return np.array([not o.reject for o in self.outcomes], dtype=bool)

    def accepted_points(self) -> np.ndarray:
        return self.param_grid[self.accepted]

    def rows(self) -> list[dict]:
        out = []
        for b, o in zip(self.param_grid, self.outcomes):
            row = {f"b{k + 1}": float(v) for k, v in enumerate(b)}
            row.update(
                statistic=o.statistic,
                critical_value=o.critical_value,
                contact_set_size=len(o.contact_set),
                dropped_points=o.dropped_points,
                accepted=not o.reject,
            )
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "param_grid": self.param_grid.tolist(),
            "outcomes": [o.to_dict() for o in self.outcomes],
            "accepted": self.accepted.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "ConfidenceSet":
        return cls(
            param_grid=np.array(d["param_grid"], dtype=float),
            outcomes=[TestOutcome.from_dict(o) for o in d["outcomes"]],
            config=d["config"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "ConfidenceSet":
        return cls.from_dict(json.loads(text))


def kernel_echo(kcfg: KernelConfig, approach: str) -> dict:
    return {
        "scale": kcfg.scale,
        "rate": kcfg.rate,
        "order_p": kcfg.order_p,
        "leave_one_out": resolve_leave_one_out(kcfg, approach),
    }


def _test_one(job, data, model, grid, kcfg, ccfg, approach, rep):
    idx, b = job
    rng = substream(ccfg.seed, rep, MULT, idx)
    return clr_test(data, model, b, grid, kcfg, ccfg, rng, approach=approach)


def invert(
    data: Dataset,
    model: SignModel,
    param_grid,
    kcfg: KernelConfig,
    ccfg: ClrConfig,
    approach="index",
    threads=1,
    rep=0,
) -> ConfidenceSet:
    """Collect every parameter value the pointwise test does not reject.

    One evaluation grid is drawn per run (stream ``(seed, rep, GRID)``) and
    shared by all parameter values; the multiplier draws for the ``k``-th
    parameter come from stream ``(seed, rep, MULT, k)``.
    """
    if data.n == 0:
        raise InvalidDataError("dataset is empty")
    model.check_dataset(data)
    param_grid = np.atleast_2d(np.asarray(param_grid, dtype=float))
    for b in param_grid:
        model.param_space.validate(b)
    grid = build_eval_grid(data, model, ccfg.grid_size, substream(ccfg.seed, rep, GRID), approach)
    work = partial(_test_one, data=data, model=model, grid=grid, kcfg=kcfg, ccfg=ccfg, approach=approach, rep=rep)
    outcomes = pmap(work, list(enumerate(param_grid)), threads)
    config = {
        "version": __version__,
        "approach": approach,
        "model": model.describe(),
        "kernel": kernel_echo(kcfg, approach),
        "clr": {"alpha": ccfg.alpha, "B": ccfg.B, "grid_size": ccfg.grid_size, "seed": ccfg.seed},
        "n": data.n,
        "rep": rep,
        "eval_grid": "shared across parameter values",
    }
    return ConfidenceSet(param_grid, outcomes, config)
