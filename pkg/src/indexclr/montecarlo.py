"""Simulated rejection frequencies of the Index and Full tests on the benchmark design.

Each replication draws a fresh dataset from stream ``(seed, rep, DATA)`` and a
fresh evaluation grid from ``(seed, rep, GRID)``. Both approaches consume the
same streams, so Index and Full results for one cell are paired.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from functools import partial

import numpy as np

from indexclr import __version__
from indexclr.clr import APPROACHES, ClrConfig, clr_test
from indexclr.confset import build_eval_grid, kernel_echo
from indexclr.dgp import simulate_section5
from indexclr.errors import CellTimeoutError, IndexClrError, InvalidConfigError
from indexclr.kernels import KernelConfig
from indexclr.models import make_binary_model
from indexclr.parallel import DATA, GRID, MULT, pmap, substream

# d -> (full-route rate r, full-route order p)
BANDWIDTH_RP = {3: (11 / 70, 2), 4: (1 / 9, 4), 5: (21 / 220, 4), 10: (1 / 21, 6)}
# n -> d -> (c_index, c_full)
BANDWIDTH_SCALES = {
    250: {3: (3.05, 2.65), 4: (3.45, 4.8), 5: (3.7, 5.6), 10: (4.1, 8.35)},
    500: {3: (2.55, 2.35), 4: (2.95, 4.3), 5: (3.05, 4.9), 10: (3.75, 8.0)},
    1000: {3: (2.0, 2.15), 4: (2.5, 3.95), 5: (2.75, 4.45), 10: (3.5, 7.7)},
}
INDEX_RATE = 0.2

DESK = {"reps": 200, "B": 1000, "grid_size": 400}
FULL_SCALE = {"reps": 1000, "B": 4000, "grid_size": 1000}

STATUS_OK = "OK"
STATUS_TIMEOUT = "TIMEOUT"
STATUS_ERROR = "ERROR"


def default_kernel(approach: str, d: int, n: int) -> KernelConfig:
    """Tabulated bandwidth settings; ``n`` snaps to the nearest tabulated size on a log scale."""
    if approach not in APPROACHES:
        raise InvalidConfigError(f"approach must be one of {APPROACHES}, got {approach!r}")
    if d not in BANDWIDTH_RP:
        raise InvalidConfigError(f"no tabulated bandwidth for d={d}; tabulated d: {sorted(BANDWIDTH_RP)}")
    if n < 1:
        raise InvalidConfigError(f"n must be positive, got {n}")
    n_tab = min(BANDWIDTH_SCALES, key=lambda m: abs(math.log(m) - math.log(n)))
    c_index, c_full = BANDWIDTH_SCALES[n_tab][d]
    if approach == "index":
        return KernelConfig(scale=c_index, rate=INDEX_RATE, order_p=2)
    r, p = BANDWIDTH_RP[d]
    return KernelConfig(scale=c_full, rate=r, order_p=p)


def b_point(d: int, b2: float) -> np.ndarray:
    b = np.zeros(d)
    b[0], b[1] = 1.0, b2
    return b


@dataclass(frozen=True)
class ExperimentCell:
    """One (approach, d, n, b) entry of a rejection-frequency table.

    ``kernel=None`` loads the tabulated defaults. ``time_budget`` (seconds)
    stops the cell early with status ``TIMEOUT``.
    """

    approach: str
    d: int
    n: int
    b2: float
    reps: int = DESK["reps"]
    clr: ClrConfig = field(default_factory=lambda: ClrConfig(B=DESK["B"], grid_size=DESK["grid_size"]))
    kernel: KernelConfig | None = None
    time_budget: float | None = None

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise InvalidConfigError(f"approach must be one of {APPROACHES}, got {self.approach!r}")
        if self.d < 2:
            raise InvalidConfigError(f"d must be at least 2, got {self.d}")
        if self.n < 2:
            raise InvalidConfigError(f"n must be at least 2, got {self.n}")
        if self.reps < 1:
            raise InvalidConfigError(f"reps must be positive, got {self.reps}")
        if self.time_budget is not None and not self.time_budget > 0:
            raise InvalidConfigError(f"time budget must be positive, got {self.time_budget}")

    @property
    def kernel_config(self) -> KernelConfig:
        return self.kernel if self.kernel is not None else default_kernel(self.approach, self.d, self.n)

    @property
    def b(self) -> np.ndarray:
        return b_point(self.d, self.b2)

    @property
    def null(self) -> bool:
        # the identified set is {b2 >= 0, b_k = 0 for k >= 3}
        return self.b2 >= 0

    def describe(self) -> dict:
        try:
            kernel = kernel_echo(self.kernel_config, self.approach)
        except InvalidConfigError:
            kernel = None
        return {
            "approach": self.approach,
            "d": self.d,
            "n": self.n,
            "b2": self.b2,
            "b": self.b.tolist(),
            "reps": self.reps,
            "kernel": kernel,
            "clr": asdict(self.clr),
            "time_budget": self.time_budget,
        }


@dataclass
class CellResult:
    cell: ExperimentCell
    flags: list
    status: str = STATUS_OK
    message: str = ""
    wall_time: float = 0.0

    @property
    def reps_done(self) -> int:
        return len(self.flags)

    @property
    def frequency(self) -> float:
        return float(np.mean(self.flags)) if self.flags else float("nan")

    @property
    def se(self) -> float:
        if not self.flags:
            return float("nan")
        p = self.frequency
        return math.sqrt(p * (1.0 - p) / len(self.flags))

    def to_dict(self, timing=False) -> dict:
        d = {
            "cell": self.cell.describe(),
            "status": self.status,
            "message": self.message,
            "reps_done": self.reps_done,
            "rejections": int(sum(self.flags)),
            "frequency": self.frequency,
            "se": self.se,
            "reject_flags": [bool(f) for f in self.flags],
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def run_rep(rep: int, cell: ExperimentCell) -> bool:
    """Reject flag of replication ``rep``."""
    seed = cell.clr.seed
    model = make_binary_model(0.5, cell.d)
    data = simulate_section5(cell.n, cell.d, substream(seed, rep, DATA))
    grid = build_eval_grid(data, model, cell.clr.grid_size, substream(seed, rep, GRID), cell.approach)
    out = clr_test(
        data, model, cell.b, grid, cell.kernel_config, cell.clr, substream(seed, rep, MULT), approach=cell.approach
    )
    return out.reject


def rejection_frequency(cell: ExperimentCell, threads: int = 1) -> CellResult:
    """Run the replications of one cell.

    Reps run in batches of ``threads``; the time budget is checked between
    batches, so a timed-out cell keeps every flag it finished.
    """
    start = time.perf_counter()
    flags: list = []
    work = partial(run_rep, cell=cell)
    batch = max(1, threads)
    status, message = STATUS_OK, ""
    try:
        for lo in range(0, cell.reps, batch):
            if cell.time_budget is not None and time.perf_counter() - start > cell.time_budget:
                raise CellTimeoutError(f"time budget {cell.time_budget}s exhausted after {len(flags)} reps")
            flags.extend(pmap(work, range(lo, min(lo + batch, cell.reps)), threads))
    except CellTimeoutError as exc:
        status, message = STATUS_TIMEOUT, str(exc)
    except IndexClrError as exc:
        status, message = STATUS_ERROR, f"{type(exc).__name__}: {exc}"
    return CellResult(cell, flags, status, message, time.perf_counter() - start)


@dataclass
class Report:
    results: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def ratios(self) -> list[dict]:
        """``P_index / P_full`` for every power cell run under both approaches."""
        by_key = {}
        for r in self.results:
            c = r.cell
            if not c.null:
                by_key.setdefault((c.d, c.n, c.b2), {})[c.approach] = r
        out = []
        for (d, n, b2), pair in by_key.items():
            if set(pair) != {"index", "full"}:
                continue
            pi, pf = pair["index"].frequency, pair["full"].frequency
            ratio = pi / pf if pf > 0 else float("inf") if pi > 0 else float("nan")
            out.append({"d": d, "n": n, "b2": b2, "index": pi, "full": pf, "ratio": ratio})
        return out

    def rows(self) -> list[dict]:
        rows = []
        for r in self.results:
            c = r.cell
            rows.append(
                {
                    "approach": c.approach,
                    "d": c.d,
                    "n": c.n,
                    "b2": c.b2,
                    "reps": c.reps,
                    "reps_done": r.reps_done,
                    "frequency": r.frequency,
                    "se": r.se,
                    "status": r.status,
                }
            )
        return rows

    def to_dict(self, timing=False) -> dict:
        return {
            "version": __version__,
            "config": self.config,
            "cells": [r.to_dict(timing) for r in self.results],
            "ratios": self.ratios(),
        }

    def to_json(self, timing=False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)

    def table(self) -> str:
        """Aligned text rendering, one line per cell followed by the ratio table."""
        head = f"{'approach':<8} {'d':>3} {'n':>5} {'b2':>5} {'reps':>5} {'P_hat':>7} {'se':>7}  status"
        lines = [head, "-" * len(head)]
        for row in self.rows():
            lines.append(
                f"{row['approach']:<8} {row['d']:>3} {row['n']:>5} {row['b2']:>5g} {row['reps_done']:>5} "
                f"{row['frequency']:>7.3f} {row['se']:>7.3f}  {row['status']}"
            )
        ratios = self.ratios()
        if ratios:
            lines += ["", f"{'d':>3} {'n':>5} {'b2':>5} {'index':>7} {'full':>7} {'ratio':>7}"]
            for q in ratios:
                lines.append(
                    f"{q['d']:>3} {q['n']:>5} {q['b2']:>5g} {q['index']:>7.3f} {q['full']:>7.3f} {q['ratio']:>7.2f}"
                )
        return "\n".join(lines)


def run_table(cells, threads: int = 1, config=None) -> Report:
    """Run every cell; failures are recorded in the cell status and the run continues."""
    return Report([rejection_frequency(c, threads) for c in cells], dict(config or {}))


def preset_cells(name: str, seed: int = 0, overrides=None) -> list[ExperimentCell]:
    """Cells of a named preset.

    ``table2-*`` are the null cells (``b2`` in ``{0, 0.5}``), ``table3-*`` the
    power cells (``b2 = -1``); ``*-desk`` runs 200 reps with B=1000 and 400 grid
    points, ``*-fullscale`` the full 1000/4000/1000 scale. ``overrides`` may reset
    ``reps``, ``B``, ``grid_size``, ``alpha``, ``d``, ``n``, ``approaches`` or
    ``time_budget``.
    """
    try:
        table, scale = name.rsplit("-", 1)
    except ValueError:
        raise InvalidConfigError(f"unknown preset {name!r}") from None
    if table not in ("table2", "table3") or scale not in ("desk", "fullscale"):
        raise InvalidConfigError(f"unknown preset {name!r}; use table2|table3 followed by -desk|-fullscale")
    settings = dict(DESK if scale == "desk" else FULL_SCALE)
    settings.update(d=sorted(BANDWIDTH_RP), n=sorted(BANDWIDTH_SCALES), approaches=list(APPROACHES), alpha=0.05)
    settings["time_budget"] = None
    for k, v in (overrides or {}).items():
        if k not in settings:
            raise InvalidConfigError(f"unknown preset override {k!r}")
        if v is not None:
            settings[k] = v
    b2s = (0.0, 0.5) if table == "table2" else (-1.0,)
    clr = ClrConfig(alpha=settings["alpha"], B=settings["B"], grid_size=settings["grid_size"], seed=seed)
    cells = []
    for d in settings["d"]:
        for n in settings["n"]:
            for b2 in b2s:
                for approach in settings["approaches"]:
                    cells.append(
                        ExperimentCell(
                            approach, d, n, b2, settings["reps"], clr, time_budget=settings["time_budget"]
                        )
                    )
    return cells


def with_seed(cell: ExperimentCell, seed: int) -> ExperimentCell:
    return replace(cell, clr=replace(cell.clr, seed=seed))
