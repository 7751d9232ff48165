"""Sign-restricted discrete choice models.

A model is described by an index function ``g(x, c, b)``, an outcome
transformation ``h(y, c)`` and a finite contrast set ``C``. The identifying
restriction is that, at the true parameter, ``E[h(Y, c) | X]`` has the same
sign as ``g(X, c, beta)`` for every contrast.

Contrasts are plain Python values: ``None`` (binary), an ``int`` category
(ordered), a pair ``(s, t)`` with ``s < t`` (multinomial, panel binary) or a
triple ``(k, s, t)`` (panel ordered).

Both ``g`` and ``h`` accept a single record or a stacked array of records and
use ``...`` indexing, so a 1-d covariate row yields a scalar and an ``(n, p)``
matrix yields a length-``n`` vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Callable

import numpy as np

from indexclr.errors import InvalidConfigError, InvalidDataError


@dataclass(frozen=True)
class ParamSpace:
    """Normalized parameter space.

    The first coordinate is fixed at ``sign`` (``|b_1| = 1``); the remaining
    ``dim - 1`` coordinates live in the closed box ``[lower, upper]``.
    ``threshold_block``, when set, is a ``(start, stop)`` slice of coordinates
    that must be strictly increasing (ordered-choice cut points).
    """

    dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    sign: int = 1
    threshold_block: tuple[int, int] | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidConfigError(f"dim must be positive, got {self.dim}")
        if self.sign not in (1, -1):
            raise InvalidConfigError(f"sign must be +1 or -1, got {self.sign}")
        if len(self.lower) != self.dim - 1 or len(self.upper) != self.dim - 1:
            raise InvalidConfigError(
                f"box needs {self.dim - 1} bounds, got {len(self.lower)} and {len(self.upper)}"
            )
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise InvalidConfigError("box lower bound exceeds upper bound")
        if self.threshold_block is not None:
            start, stop = self.threshold_block
            if not 1 <= start < stop <= self.dim:
                raise InvalidConfigError(f"bad threshold block {self.threshold_block}")

    @classmethod
    def box_space(cls, dim, bound=1.0, sign=1):
        return cls(dim, (-bound,) * (dim - 1), (bound,) * (dim - 1), sign)

    def thresholds_ordered(self, b) -> bool:
        if self.threshold_block is None:
            return True
        start, stop = self.threshold_block
        return bool(np.all(np.diff(np.asarray(b)[start:stop]) > 0))

    def contains(self, b, tol=1e-12) -> bool:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.dim,):
            return False
        if abs(b[0] - self.sign) > tol:
            return False
        free = b[1:]
        if np.any(free < np.asarray(self.lower) - tol) or np.any(free > np.asarray(self.upper) + tol):
            return False
        return self.thresholds_ordered(b)

    def validate(self, b, normalized=True) -> np.ndarray:
        """Return ``b`` as a float array or raise :class:`InvalidConfigError`.

        With ``normalized=False`` only the length and threshold ordering are
        checked, which allows evaluating rescaled parameter vectors.
        """
        b = np.asarray(b, dtype=float)
        if b.shape != (self.dim,):
            raise InvalidConfigError(f"parameter must have length {self.dim}, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise InvalidConfigError("parameter has non-finite entries")
        if not self.thresholds_ordered(b):
            raise InvalidConfigError(f"threshold block of {b.tolist()} is not strictly increasing")
        if normalized and not self.contains(b):
            raise InvalidConfigError(
                f"parameter {b.tolist()} is outside the space (b1={self.sign}, box bounds)"
            )
        return b


def sample_param(space: ParamSpace, rng: np.random.Generator, max_tries=10_000) -> np.ndarray:
    """Draw uniformly from ``space``; threshold blocks use rejection sampling."""
    lower = np.asarray(space.lower, dtype=float)
    upper = np.asarray(space.upper, dtype=float)
    b = np.empty(space.dim)
    b[0] = space.sign
    b[1:] = rng.uniform(lower, upper)
    if space.threshold_block is not None:
        start, stop = space.threshold_block
        for _ in range(max_tries):
            if space.thresholds_ordered(b):
                break
            b[start:stop] = rng.uniform(lower[start - 1 : stop - 1], upper[start - 1 : stop - 1])
        else:
            raise InvalidConfigError("could not draw an ordered threshold block; widen its box")
    return b


@dataclass(frozen=True)
class Dataset:
    """``n`` observations: covariate rows ``X`` (n, p) and outcomes ``Y``.

    ``Y`` is ``(n,)`` for scalar outcomes and ``(n, T)`` for panels.
    """

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise InvalidDataError(f"X must be a matrix, got shape {X.shape}")
        if Y.ndim not in (1, 2):
            raise InvalidDataError(f"Y must be a vector or matrix, got shape {Y.shape}")
        if X.shape[0] != Y.shape[0]:
            raise InvalidDataError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidDataError("dataset contains missing or non-finite values")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx])


@dataclass(frozen=True)
class SignModel:
    kind: str
    g: Callable[[Any, Any, Any], Any]
    h: Callable[[Any, Any], Any]
    contrasts: tuple
    param_space: ParamSpace
    outcome_arity: int
    n_covariates: int
    tau: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.contrasts:
            raise InvalidConfigError("contrast set is empty")
        if len(set(self.contrasts)) != len(self.contrasts):
            raise InvalidConfigError("contrast set has duplicates")

    def __reduce__(self):
        # closures do not pickle; rebuild from the factory arguments instead
        if self.kind not in MODEL_FACTORIES:
            raise TypeError(f"cannot pickle custom model kind {self.kind!r}")
        return (_rebuild_model, (self.kind, self.params))

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}

    def check_dataset(self, data: Dataset) -> None:
        if data.n == 0:
            raise InvalidDataError("dataset is empty")
        if data.X.shape[1] != self.n_covariates:
            raise InvalidDataError(
                f"{self.kind} model expects {self.n_covariates} covariate columns, got {data.X.shape[1]}"
            )
        arity = 1 if data.Y.ndim == 1 else data.Y.shape[1]
        if arity != self.outcome_arity:
            raise InvalidDataError(
                f"{self.kind} model expects outcome records of length {self.outcome_arity}, got {arity}"
            )
        for c in self.contrasts:
            self.h(data.Y, c)


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise InvalidConfigError(f"tau must lie in (0, 1), got {tau}")


def _check_values(y, allowed, what):
    y = np.asarray(y)
    if not np.all(np.isin(y, allowed)):
        bad = np.setdiff1d(np.unique(y), allowed)
        raise InvalidDataError(f"{what} outside {list(allowed)}: {bad.tolist()[:5]}")


def make_binary_model(tau=0.5, d=2, bound=1.0, sign=1) -> SignModel:
    """Binary choice under quantile independence: ``g = x'b``, ``h = y - tau``."""
    _check_tau(tau)
    if d < 1:
        raise InvalidConfigError(f"d must be positive, got {d}")

    def g(x, c, b):
        return np.asarray(x, dtype=float) @ np.asarray(b, dtype=float)

    def h(y, c):
        _check_values(y, (0, 1), "binary outcome")
        return np.asarray(y, dtype=float) - tau

    return SignModel(
        kind="binary",
        g=g,
        h=h,
        contrasts=(None,),
        param_space=ParamSpace.box_space(d, bound, sign),
        outcome_arity=1,
        n_covariates=d,
        tau=tau,
        params={"tau": tau, "d": d, "bound": bound, "sign": sign},
    )


def make_ordered_model(K, q_dim, tau=0.5, bound=1.0, threshold_bound=2.0, sign=1) -> SignModel:
    """Ordered response with ``K + 1`` categories.

    Parameters are laid out as ``b = (theta_1..theta_q, lambda_1..lambda_K)``;
    the index for category ``c`` is ``lambda_c - x'theta``.
    """
    _check_tau(tau)
    if K < 1 or q_dim < 1:
        raise InvalidConfigError(f"need K >= 1 and q_dim >= 1, got K={K}, q_dim={q_dim}")
    space = ParamSpace(
        dim=q_dim + K,
        lower=(-bound,) * (q_dim - 1) + (-threshold_bound,) * K,
        upper=(bound,) * (q_dim - 1) + (threshold_bound,) * K,
        sign=sign,
        threshold_block=(q_dim, q_dim + K),
    )

    def g(x, c, b):
        b = np.asarray(b, dtype=float)
        if not space.thresholds_ordered(b):
            raise InvalidConfigError(f"thresholds {b[q_dim:].tolist()} are not strictly increasing")
        return b[q_dim + c - 1] - np.asarray(x, dtype=float) @ b[:q_dim]

    def h(y, c):
        _check_values(y, np.arange(1, K + 2), "ordered outcome")
        return (np.asarray(y) <= c).astype(float) - tau

    return SignModel(
        kind="ordered",
        g=g,
        h=h,
        contrasts=tuple(range(1, K + 1)),
        param_space=space,
        outcome_arity=1,
        n_covariates=q_dim,
        tau=tau,
        params={"K": K, "q_dim": q_dim, "tau": tau, "bound": bound, "threshold_bound": threshold_bound, "sign": sign},
    )


def _block(x, j, q):
    return np.asarray(x, dtype=float)[..., (j - 1) * q : j * q]


def make_multinomial_model(K, q, bound=1.0, sign=1) -> SignModel:
    """Multinomial choice under rank ordering; rows hold ``K`` blocks of ``q`` covariates."""
    if K < 2 or q < 1:
        raise InvalidConfigError(f"need K >= 2 and q >= 1, got K={K}, q={q}")

    def g(x, c, b):
        s, t = c
        return (_block(x, s, q) - _block(x, t, q)) @ np.asarray(b, dtype=float)

    def h(y, c):
        s, t = c
        _check_values(y, np.arange(1, K + 1), "multinomial choice")
        y = np.asarray(y)
        return (y == s).astype(float) - (y == t).astype(float)

    return SignModel(
        kind="multinomial",
        g=g,
        h=h,
        contrasts=tuple(combinations(range(1, K + 1), 2)),
        param_space=ParamSpace.box_space(q, bound, sign),
        outcome_arity=1,
        n_covariates=K * q,
        params={"K": K, "q": q, "bound": bound, "sign": sign},
    )


def _panel_outcome(y, T):
    y = np.asarray(y)
    if y.shape[-1:] != (T,):
        raise InvalidDataError(f"panel outcome must have length T={T}, got shape {y.shape}")
    return y


def make_panel_binary_model(T, q, bound=1.0, sign=1) -> SignModel:
    """Binary panel with fixed effects; rows hold ``T`` per-period blocks of ``q``."""
    if T < 2 or q < 1:
        raise InvalidConfigError(f"need T >= 2 and q >= 1, got T={T}, q={q}")

    def g(x, c, b):
        s, t = c
        return (_block(x, s, q) - _block(x, t, q)) @ np.asarray(b, dtype=float)

    def h(y, c):
        s, t = c
        y = _panel_outcome(y, T)
        _check_values(y, (0, 1), "panel binary outcome")
        return y[..., s - 1].astype(float) - y[..., t - 1]

    return SignModel(
        kind="panel_binary",
        g=g,
        h=h,
        contrasts=tuple(combinations(range(1, T + 1), 2)),
        param_space=ParamSpace.box_space(q, bound, sign),
        outcome_arity=T,
        n_covariates=T * q,
        params={"T": T, "q": q, "bound": bound, "sign": sign},
    )


def make_panel_ordered_model(K, T, q, bound=1.0, sign=1) -> SignModel:
    """Ordered panel with fixed effects.

    The index is ``(x_t - x_s)'b``; note the period order is reversed relative
    to the binary panel model, matching the outcome contrast
    ``1{y_s <= k} - 1{y_t <= k}``.
    """
    if K < 1 or T < 2 or q < 1:
        raise InvalidConfigError(f"need K >= 1, T >= 2, q >= 1, got K={K}, T={T}, q={q}")

    def g(x, c, b):
        _, s, t = c
        return (_block(x, t, q) - _block(x, s, q)) @ np.asarray(b, dtype=float)

    def h(y, c):
        k, s, t = c
        y = _panel_outcome(y, T)
        _check_values(y, np.arange(1, K + 2), "panel ordered outcome")
        return (y[..., s - 1] <= k).astype(float) - (y[..., t - 1] <= k).astype(float)

    contrasts = tuple((k, s, t) for k in range(1, K + 1) for s, t in combinations(range(1, T + 1), 2))
    return SignModel(
        kind="panel_ordered",
        g=g,
        h=h,
        contrasts=contrasts,
        param_space=ParamSpace.box_space(q, bound, sign),
        outcome_arity=T,
        n_covariates=T * q,
        params={"K": K, "T": T, "q": q, "bound": bound, "sign": sign},
    )


MODEL_FACTORIES = {
    "binary": make_binary_model,
    "ordered": make_ordered_model,
    "multinomial": make_multinomial_model,
    "panel_binary": make_panel_binary_model,
    "panel_ordered": make_panel_ordered_model,
}


def _rebuild_model(kind, params):
    return MODEL_FACTORIES[kind](**params)
