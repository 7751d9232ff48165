"""Kernel estimators of the studentized moment profile.

Two conditioning schemes are supported:

* index: condition on the pair ``(g(X, c, b), g(X, c, gamma))``, a bivariate
  smoothing problem whatever the covariate dimension;
* full: condition on the whole covariate vector with a ``d``-fold product of
  order-``p`` biweight kernels.

For an evaluation point ``v`` the estimators are

    mhat(v)   = (n h^k)^-1   sum_i G_i H_i K_i(v)
    sigma2(v) = n^-2 h^-2k   sum_i u_i^2 G_i^2 K_i(v)^2

with ``k = 2`` (index) or ``k = d`` (full), and ``u_i`` the Nadaraya-Watson
residual of ``H`` at observation ``i``. By default the fit at ``i`` includes
``j = i`` on the index route and leaves it out on the full route; see
``KernelConfig.leave_one_out``.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from indexclr.errors import DegenerateProfileError, InvalidDataError
from indexclr.kernels import (
    KernelConfig,
    bandwidth,
    biweight,
    higher_order_biweight,
    resolve_leave_one_out,
    sample_std,
)
from indexclr.models import Dataset, SignModel, make_binary_model

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalPoint:
    """Evaluation point ``(x, gamma, c)``; ``gamma`` is ``None`` on the full route."""

    x: np.ndarray
    gamma: np.ndarray | None
    c: Any = None


class EvalGrid(Sequence):
    """A finite set of evaluation points stored as stacked arrays.

    ``rows`` optionally records which dataset row each ``x`` was drawn from.
    """

    def __init__(self, x, gamma=None, contrasts=None, rows=None):
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        m = self.x.shape[0]
        self.gamma = None if gamma is None else np.atleast_2d(np.asarray(gamma, dtype=float))
        if self.gamma is not None and self.gamma.shape[0] != m:
            raise ValueError("x and gamma must have the same number of points")
        self.contrasts = tuple(contrasts) if contrasts is not None else (None,) * m
        if len(self.contrasts) != m:
            raise ValueError("one contrast per grid point required")
        self.rows = None if rows is None else np.asarray(rows, dtype=int)

    @classmethod
    def from_points(cls, points):
        points = list(points)
        gam = None if points[0].gamma is None else [p.gamma for p in points]
        return cls([p.x for p in points], gam, [p.c for p in points])

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, (list, np.ndarray)):
            idx = np.arange(len(self))[i]
            return self.take(idx)
        gam = None if self.gamma is None else self.gamma[i]
        return EvalPoint(self.x[i], gam, self.contrasts[i])

    def take(self, idx) -> "EvalGrid":
        idx = np.asarray(idx, dtype=int)
        return EvalGrid(
            self.x[idx],
            None if self.gamma is None else self.gamma[idx],
            [self.contrasts[i] for i in idx],
            None if self.rows is None else self.rows[idx],
        )


@dataclass
class MomentProfile:
    """Studentized moment estimates over the retained grid points.

    ``scores[i, v] = u_i G_i K_i(v)`` feeds the multiplier simulation;
    ``norm`` is ``n h^2`` (index) or ``n h^d`` (full).
    """

    grid: EvalGrid
    mhat: np.ndarray
    sigmahat: np.ndarray
    scores: np.ndarray
    norm: float
    kept: np.ndarray
    dropped: int = 0
    nw_fallbacks: int = 0
    residuals: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.mhat.shape[0]

    @property
    def ratio(self) -> np.ndarray:
        return self.mhat / self.sigmahat


_SNAP = 32 * np.finfo(float).eps


def _nw_residuals(H, W, leave_one_out=False):
    """``H - (W @ H) / rowsum(W)``, with a mean fallback where the row sum is not positive.

    With ``leave_one_out`` the diagonal of ``W`` is zeroed first (in place).
    """
    if leave_one_out:
        np.fill_diagonal(W, 0.0)
    den = W.sum(axis=1)
    bad = den <= 0
    fitted = np.empty_like(H)
    ok = ~bad
    fitted[ok] = (W[ok] @ H) / den[ok]
    fitted[bad] = H.mean()
    u = H - fitted
    # a fit that reproduces H up to rounding is an exact zero; rounding noise
    # would otherwise give a tiny positive sigmahat and an unbounded ratio
    u[np.abs(u) <= _SNAP * np.max(np.abs(H), initial=0.0)] = 0.0
    return u, int(bad.sum())


def _pair_kernel(z, scale):
    # biweight((z_i - z_j) / scale) as an (n, n) matrix, built in place
    u = np.subtract.outer(z, z)
    u /= scale
    u *= u
    np.subtract(1.0, u, out=u)
    np.maximum(u, 0.0, out=u)
    u *= u
    return u


class _IndexPieces:
    """Per-(b, data) quantities shared by every evaluation point on the index route."""

    def __init__(self, data: Dataset, model: SignModel, b, cfg: KernelConfig, scales=None):
        self.data = data
        self.scales = scales
        self.model = model
        self.b = np.asarray(b, dtype=float)
        self.n = data.n
        self.h = bandwidth(self.n, cfg)
        self.norm = self.n * self.h**2
        self.loo = resolve_leave_one_out(cfg, "index")
        self._by_contrast = {}
        self._residuals = {}
        self.fallbacks = 0

    def contrast(self, c):
        if c not in self._by_contrast:
            gb = np.asarray(self.model.g(self.data.X, c, self.b), dtype=float)
            H = np.asarray(self.model.h(self.data.Y, c), dtype=float)
            sb = self.scales[0] if self.scales else sample_std(gb)
            self._by_contrast[c] = {"gb": gb, "H": H, "sb": sb, "Kb": None}
        return self._by_contrast[c]

    def gamma_index(self, gamma, c):
        gg = np.asarray(self.model.g(self.data.X, c, gamma), dtype=float)
        return gg, self.scales[1] if self.scales else sample_std(gg)

    def residuals(self, gamma, c):
        key = (np.asarray(gamma, dtype=float).tobytes(), c)
        if key not in self._residuals:
            piece = self.contrast(c)
            if piece["Kb"] is None:
                piece["Kb"] = _pair_kernel(piece["gb"], piece["sb"] * self.h)
            gg, sg = self.gamma_index(gamma, c)
            W = _pair_kernel(gg, sg * self.h)
            W *= piece["Kb"]
            u, bad = _nw_residuals(piece["H"], W, self.loo)
            self.fallbacks += bad
            self._residuals[key] = (u, gg, sg)
        return self._residuals[key]

    def weights(self, point: EvalPoint, gg, sg):
        piece = self.contrast(point.c)
        xb = self.model.g(point.x, point.c, self.b)
        xg = self.model.g(point.x, point.c, point.gamma)
        return biweight((xb - piece["gb"]) / (piece["sb"] * self.h)) * biweight((xg - gg) / (sg * self.h))


def _check_inputs(data, model):
    if data.n == 0:
        raise InvalidDataError("dataset is empty")
    model.check_dataset(data)


def nw_fit(data: Dataset, model: SignModel, b, gamma, c, cfg: KernelConfig) -> np.ndarray:
    """Nadaraya-Watson residuals ``u_i(b, c, gamma)`` of ``h(Y, c)`` on the two indices."""
    _check_inputs(data, model)
    if data.n == 1:
        return np.zeros(1)
    return _IndexPieces(data, model, b, cfg).residuals(gamma, c)[0].copy()


def mhat_index(data: Dataset, model: SignModel, b, v: EvalPoint, cfg: KernelConfig, scales=None) -> float:
    """``mhat_b(v)``. ``scales=(s_b, s_gamma)`` overrides the sample standard deviations."""
    pieces = _IndexPieces(data, model, b, cfg, scales)
    piece = pieces.contrast(v.c)
    gg, sg = pieces.gamma_index(v.gamma, v.c)
    K = pieces.weights(v, gg, sg)
    return float(np.sum(piece["gb"] * piece["H"] * K) / pieces.norm)


def sigmahat_index(
    data: Dataset, model: SignModel, b, v: EvalPoint, residuals, cfg: KernelConfig, scales=None
) -> float:
    """Studentizing scale at ``v``; a return value of 0 means the point must be dropped."""
    pieces = _IndexPieces(data, model, b, cfg, scales)
    piece = pieces.contrast(v.c)
    gg, sg = pieces.gamma_index(v.gamma, v.c)
    K = pieces.weights(v, gg, sg)
    score = np.asarray(residuals, dtype=float) * piece["gb"] * K
    return float(np.sqrt(np.sum(score * score)) / pieces.norm)


def _assemble(grid, mhat, scores, norm, residuals, fallbacks):
    sigmahat = np.sqrt(np.sum(scores * scores, axis=0)) / norm
    keep = np.isfinite(sigmahat) & (sigmahat > 0)
    dropped = int((~keep).sum())
    if dropped:
        logger.info("dropped %d of %d grid points with zero estimated variance", dropped, len(grid))
    if not keep.any():
        raise DegenerateProfileError("every grid point has zero estimated variance")
    kept = np.flatnonzero(keep)
    return MomentProfile(
        grid=grid.take(kept),
        mhat=mhat[kept],
        sigmahat=sigmahat[kept],
        scores=np.ascontiguousarray(scores[:, kept]),
        norm=norm,
        kept=kept,
        dropped=dropped,
        nw_fallbacks=fallbacks,
        residuals=residuals,
    )


def profile_index(data: Dataset, model: SignModel, b, grid: EvalGrid, cfg: KernelConfig) -> MomentProfile:
    """Moment profile on the index route.

    Residuals are computed once per distinct ``(gamma, c)`` and reused across
    every ``x`` paired with it.
    """
    _check_inputs(data, model)
    if len(grid) == 0:
        raise DegenerateProfileError("evaluation grid is empty")
    pieces = _IndexPieces(data, model, b, cfg)
    m = len(grid)
    mhat = np.empty(m)
    scores = np.empty((data.n, m))
    for v in range(m):
        point = grid[v]
        piece = pieces.contrast(point.c)
        u, gg, sg = pieces.residuals(point.gamma, point.c)
        K = pieces.weights(point, gg, sg)
        GK = piece["gb"] * K
        mhat[v] = np.dot(GK, piece["H"]) / pieces.norm
        scores[:, v] = u * GK
    residuals = {k: r[0] for k, r in pieces._residuals.items()}
    return _assemble(grid, mhat, scores, pieces.norm, residuals, pieces.fallbacks)


class _FullPieces:
    def __init__(self, data: Dataset, cfg: KernelConfig):
        self.data = data
        self.cfg = cfg
        self.n, self.d = data.X.shape
        self.h = bandwidth(self.n, cfg)
        self.norm = self.n * self.h**self.d
        self.scales = np.array([sample_std(data.X[:, k]) for k in range(self.d)])
        self.loo = resolve_leave_one_out(cfg, "full")
        self._W = None

    def weights(self, x):
        u = (np.asarray(x, dtype=float) - self.data.X) / (self.scales * self.h)
        return np.prod(higher_order_biweight(self.cfg.order_p, u), axis=1)

    def pair_weights(self):
        if self._W is None:
            X = self.data.X
            W = np.ones((self.n, self.n))
            for k in range(self.d):
                z = X[:, k] / (self.scales[k] * self.h)
                W *= higher_order_biweight(self.cfg.order_p, np.subtract.outer(z, z))
            self._W = W
        return self._W


def _default_full_model(data, model):
    return model if model is not None else make_binary_model(0.5, data.X.shape[1])


def nw_fit_full(data: Dataset, cfg: KernelConfig, model: SignModel | None = None, c=None):
    """Residuals of ``h(Y, c)`` regressed on the full covariate vector.

    Returns ``(residuals, fallback_count)``. Rows whose kernel mass is not
    positive (possible with higher-order kernels, or always for ``n = 1`` when
    leaving one out) fall back to the sample mean.
    """
    model = _default_full_model(data, model)
    _check_inputs(data, model)
    if data.n == 1:
        return np.zeros(1), 0
    H = np.asarray(model.h(data.Y, c), dtype=float)
    pieces = _FullPieces(data, cfg)
    return _nw_residuals(H, pieces.pair_weights().copy(), pieces.loo)


def mhat_full(data: Dataset, b, x, cfg: KernelConfig, model: SignModel | None = None, c=None) -> float:
    model = _default_full_model(data, model)
    pieces = _FullPieces(data, cfg)
    G = np.asarray(model.g(data.X, c, b), dtype=float)
    H = np.asarray(model.h(data.Y, c), dtype=float)
    return float(np.sum(G * H * pieces.weights(x)) / pieces.norm)


def sigmahat_full(data: Dataset, b, x, residuals, cfg: KernelConfig, model: SignModel | None = None, c=None) -> float:
    model = _default_full_model(data, model)
    pieces = _FullPieces(data, cfg)
    G = np.asarray(model.g(data.X, c, b), dtype=float)
    score = np.asarray(residuals, dtype=float) * G * pieces.weights(x)
    return float(np.sqrt(np.sum(score * score)) / pieces.norm)


def profile_full(data: Dataset, b, grid: EvalGrid, cfg: KernelConfig, model: SignModel | None = None) -> MomentProfile:
    """Moment profile conditioning on all covariates; ``gamma`` entries of the grid are ignored."""
    model = _default_full_model(data, model)
    _check_inputs(data, model)
    if len(grid) == 0:
        raise DegenerateProfileError("evaluation grid is empty")
    pieces = _FullPieces(data, cfg)
    m = len(grid)
    mhat = np.empty(m)
    scores = np.empty((data.n, m))
    per_contrast = {}
    fallbacks = 0
    for v in range(m):
        c = grid.contrasts[v]
        if c not in per_contrast:
            G = np.asarray(model.g(data.X, c, b), dtype=float)
            H = np.asarray(model.h(data.Y, c), dtype=float)
            if data.n == 1:
                u, bad = np.zeros(1), 0
            else:
                u, bad = _nw_residuals(H, pieces.pair_weights().copy(), pieces.loo)
            fallbacks += bad
            per_contrast[c] = (G, H, u)
        G, H, u = per_contrast[c]
        GK = G * pieces.weights(grid.x[v])
        mhat[v] = np.dot(GK, H) / pieces.norm
        scores[:, v] = u * GK
    residuals = {c: r[2] for c, r in per_contrast.items()}
    return _assemble(grid, mhat, scores, pieces.norm, residuals, fallbacks)
