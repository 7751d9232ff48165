"""Simulation designs and population oracles.

Two designs are provided:

* ``Section5Dgp``: binary choice with heteroskedastic normal noise and a first
  covariate whose sign is tied to the second, so the identified set is
  ``{b : b_2 >= 0, b_k = 0 for k >= 3}``;
* ``AppendixADgp``: the two small designs showing the one-index sets can be
  strictly larger or smaller than the identified set. Their noise has a
  piecewise distribution function, linear on ``(-1, 1]`` with exponential
  tails.

Oracles evaluate set membership from a large simulated covariate sample and
the analytic choice probabilities (no outcome noise enters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from indexclr.errors import InvalidConfigError
from indexclr.models import Dataset, ParamSpace, sample_param

SET_KINDS = ("theta", "theta_tilde", "theta_lower", "theta_upper")


@dataclass(frozen=True)
class Section5Dgp:
    d: int = 3
    tau: float = 0.5

    def __post_init__(self):
        if self.d < 2:
            raise InvalidConfigError(f"d must be at least 2, got {self.d}")

    @property
    def beta(self) -> np.ndarray:
        beta = np.zeros(self.d)
        beta[0] = 1.0
        return beta

    @property
    def param_space(self) -> ParamSpace:
        return ParamSpace.box_space(self.d)

    def sample_x(self, n, rng) -> np.ndarray:
        rest = rng.uniform(-1.0, 1.0, size=(n, self.d - 1))
        u = rng.uniform(0.0, 1.0, size=n)
        return np.column_stack([np.sign(rest[:, 0]) * u, rest])

    def choice_prob(self, X) -> np.ndarray:
        return choice_prob_section5(X, self.beta)

    def simulate(self, n, rng) -> Dataset:
        X = self.sample_x(n, rng)
        eps = np.sqrt(1.0 + np.sum(X * X, axis=1)) * rng.standard_normal(n)
        Y = (X @ self.beta >= eps).astype(float)
        return Dataset(X, Y)


def simulate_section5(n, d, rng) -> Dataset:
    return Section5Dgp(d).simulate(n, rng)


def choice_prob_section5(x, beta) -> np.ndarray:
    """``P(Y = 1 | X = x) = Phi(x'beta / sqrt(1 + |x|^2))``."""
    x = np.asarray(x, dtype=float)
    return ndtr((x @ np.asarray(beta, dtype=float)) / np.sqrt(1.0 + np.sum(x * x, axis=-1)))


def membership_theta(b, d=None, tol=1e-12) -> bool:
    """Closed-form identified set of the binary design: ``b_2 >= 0`` and ``b_k = 0`` for ``k >= 3``."""
    b = np.asarray(b, dtype=float)
    return bool(b[1] >= -tol and np.all(np.abs(b[2:]) <= tol))


def distance_to_theta(b) -> float:
    """Euclidean distance from ``b`` to the identified set of the binary design."""
    b = np.asarray(b, dtype=float)
    return float(np.hypot(min(b[1], 0.0), np.linalg.norm(b[2:])))


def _check_slope(tau, slope_c):
    if not 0 < tau < 1:
        raise InvalidConfigError(f"tau must lie in (0, 1), got {tau}")
    if not 0 < slope_c < min(tau, 1 - tau):
        raise InvalidConfigError(f"slope must lie in (0, min(tau, 1 - tau)), got {slope_c}")


def appendixA_Fxi(t, tau=0.5, slope_c=0.2):
    """Noise distribution function: ``tau + c t`` on ``(-1, 1]``, exponential tails outside."""
    _check_slope(tau, slope_c)
    t = np.asarray(t, dtype=float)
    lo = (tau - slope_c) * np.exp(np.minimum(t, -1.0) + 1.0)
    hi = 1.0 - (1.0 - tau - slope_c) * np.exp(-(np.maximum(t, 1.0) - 1.0))
    mid = tau + slope_c * t
    return np.where(t <= -1.0, lo, np.where(t <= 1.0, mid, hi))


def appendixA_Fxi_inverse(p, tau=0.5, slope_c=0.2):
    _check_slope(tau, slope_c)
    p = np.asarray(p, dtype=float)
    lo = np.log(np.maximum(p, 1e-300) / (tau - slope_c)) - 1.0
    hi = 1.0 - np.log(np.maximum(1.0 - p, 1e-300) / (1.0 - tau - slope_c))
    mid = (p - tau) / slope_c
    return np.where(p <= tau - slope_c, lo, np.where(p <= tau + slope_c, mid, hi))


def _kinks(s):
    # u in (-1, 1) where (s + u) / sqrt(1 + u^2) = +-1, i.e. s^2 + 2 s u = 1
    if s == 0:
        return []
    u = (1.0 - s * s) / (2.0 * s)
    return [u] if -1.0 < u < 1.0 else []


def appendixA_cond_prob(s, tau=0.5, slope_c=0.2, nodes=128) -> float:
    """``P(Y = 1 | X'b = s) = (1/2) int_{-1}^{1} F((s + u) / sqrt(1 + u^2)) du``.

    Gauss-Legendre on each piece between the points where the argument crosses
    the kinks of ``F`` at ``+-1``, so the rule converges geometrically.
    """
    _check_slope(tau, slope_c)
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = [-1.0, *_kinks(float(s)), 1.0]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        u = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.dot(w, appendixA_Fxi((s + u) / np.sqrt(1.0 + u * u), tau, slope_c))
    return float(total / 2.0)


@dataclass(frozen=True)
class AppendixADgp:
    """``variant=1``: X = (U(0,1), U(-1,1)), beta = (1, 1).

    ``variant=2``: X1, X2 ~ U(-1,1) and X3 ~ U(1,2) when X1 + X2 >= 0,
    U(-2,-1) otherwise; beta = (1, 1, 0).
    Noise is ``sqrt(1 + X2^2) xi`` with ``xi ~ F``.
    """

    variant: int = 1
    tau: float = 0.5
    slope_c: float = 0.2

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise InvalidConfigError(f"variant must be 1 or 2, got {self.variant}")
        _check_slope(self.tau, self.slope_c)

    @property
    def d(self) -> int:
        return 2 if self.variant == 1 else 3

    @property
    def beta(self) -> np.ndarray:
        return np.array([1.0, 1.0]) if self.variant == 1 else np.array([1.0, 1.0, 0.0])

    @property
    def param_space(self) -> ParamSpace:
        return ParamSpace.box_space(self.d)

    def sample_x(self, n, rng) -> np.ndarray:
        if self.variant == 1:
            return np.column_stack([rng.uniform(0.0, 1.0, n), rng.uniform(-1.0, 1.0, n)])
        x1 = rng.uniform(-1.0, 1.0, n)
        x2 = rng.uniform(-1.0, 1.0, n)
        up = rng.uniform(1.0, 2.0, n)
        down = rng.uniform(-2.0, -1.0, n)
        return np.column_stack([x1, x2, np.where(x1 + x2 >= 0, up, down)])

    def sample_xi(self, n, rng) -> np.ndarray:
        return appendixA_Fxi_inverse(rng.uniform(0.0, 1.0, n), self.tau, self.slope_c)

    def choice_prob(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return appendixA_Fxi((X @ self.beta) / np.sqrt(1.0 + X[..., 1] ** 2), self.tau, self.slope_c)

    def simulate(self, n, rng) -> Dataset:
        X = self.sample_x(n, rng)
        eps = np.sqrt(1.0 + X[:, 1] ** 2) * self.sample_xi(n, rng)
        return Dataset(X, (X @ self.beta >= eps).astype(float))


def simulate_appendixA(variant, n, tau, slope_c, rng) -> Dataset:
    return AppendixADgp(variant, tau, slope_c).simulate(n, rng)


@dataclass(frozen=True)
class MembershipResult:
    """Oracle verdict: ``True``, ``False`` or ``None`` (inconclusive).

    ``violation`` is the estimated probability mass on which the defining sign
    restriction fails; ``margin`` is the worst signed shortfall
    ``-sgn(x'b) (mean choice probability - tau)`` over populated bins (for
    ``theta``: the violation probability itself).
    """

    verdict: bool | None
    violation: float
    margin: float
    budget: int
    populated_bins: int = 0

    def __bool__(self):
        if self.verdict is None:
            raise ValueError("inconclusive membership verdict")
        return self.verdict

    def label(self) -> str:
        return "inconclusive" if self.verdict is None else str(self.verdict).lower()


def _equal_count_bins(z, k):
    # bin edges at the interior quantiles; ids in 0..k-1
    edges = np.quantile(z, np.linspace(0.0, 1.0, k + 1)[1:-1])
    return np.searchsorted(edges, z, side="right")


def _signed_bins(z, k):
    """Equal-count bins computed separately on ``z < 0`` and ``z >= 0``."""
    ids = np.empty(z.shape[0], dtype=np.int64)
    neg = z < 0
    for offset, mask in ((0, neg), (k, ~neg)):
        if mask.any():
            ids[mask] = offset + _equal_count_bins(z[mask], k)
    return ids


def _bin_violation(bin_ids, prob, sign_b, tau, tol, min_bin):
    """Mass of observations whose bin-mean sign disagrees with ``sign_b``."""
    counts = np.bincount(bin_ids)
    sums = np.bincount(bin_ids, weights=prob)
    populated = counts >= min_bin
    means = np.where(counts > 0, sums / np.maximum(counts, 1), tau) - tau
    shortfall = -sign_b * means[bin_ids]
    live = populated[bin_ids]
    bad = live & (shortfall > tol)
    worst = float(shortfall[live].max()) if live.any() else float("nan")
    return float(bad.mean()), worst, int(populated.sum())


def _verdict(p_hat, budget, threshold):
    se = np.sqrt(max(p_hat, 1.0 / budget) * (1.0 - p_hat) / budget)
    if p_hat + 3 * se < threshold:
        return True
    if p_hat - 3 * se > threshold:
        return False
    return None


def membership_theta_mc(
    b,
    set_kind="theta",
    budget=1_000_000,
    rng=None,
    dgp=None,
    gammas=None,
    n_gamma=50,
    threshold=1e-3,
    tol=1e-3,
    min_bin=200,
    bins_1d=100,
    bins_2d=20,
    min_populated=4,
) -> MembershipResult:
    """Monte Carlo membership of ``b`` in one of the population sets.

    ``theta``: ``P(b'X X'beta < 0)``. ``theta_tilde``: sign of the choice
    probability averaged within product bins of ``(x'b, x'gamma)``.
    ``theta_upper``: bins of ``x'b`` only. ``theta_lower``: bins of
    ``x'gamma`` only. Bins never straddle zero of the conditioning index.
    ``gammas`` defaults to ``n_gamma`` uniform draws from the parameter space.
    """
    if set_kind not in SET_KINDS:
        raise InvalidConfigError(f"set_kind must be one of {SET_KINDS}, got {set_kind!r}")
    if budget < 100_000:
        raise InvalidConfigError(f"Monte Carlo budget must be at least 1e5, got {budget}")
    rng = np.random.default_rng() if rng is None else rng
    dgp = Section5Dgp(len(b)) if dgp is None else dgp
    b = np.asarray(b, dtype=float)
    X = dgp.sample_x(budget, rng)
    xb = X @ b
    if set_kind == "theta":
        p_hat = float(np.mean(xb * (X @ dgp.beta) < 0))
        return MembershipResult(_verdict(p_hat, budget, threshold), p_hat, p_hat, budget)

    prob = dgp.choice_prob(X)
    sign_b = np.sign(xb)
    if set_kind == "theta_upper":
        ids = _signed_bins(xb, bins_1d)
        viol, worst, pop = _bin_violation(ids, prob, sign_b, dgp.tau, tol, min_bin)
        verdict = _verdict(viol, budget, threshold) if pop >= min_populated else None
        return MembershipResult(verdict, viol, worst, budget, pop)

    if gammas is None:
        gammas = [sample_param(dgp.param_space, rng) for _ in range(n_gamma)]
    b_ids = _signed_bins(xb, bins_2d) if set_kind == "theta_tilde" else None
    viol, worst, pop = 0.0, -np.inf, None
    for gamma in gammas:
        xg = X @ np.asarray(gamma, dtype=float)
        if set_kind == "theta_tilde":
            ids = b_ids * (2 * bins_2d) + _signed_bins(xg, bins_2d)
        else:
            ids = _signed_bins(xg, bins_1d)
        v, w, p = _bin_violation(ids, prob, sign_b, dgp.tau, tol, min_bin)
        viol, worst = max(viol, v), max(worst, w)
        pop = p if pop is None else min(pop, p)
    verdict = _verdict(viol, budget, threshold) if pop >= min_populated else None
    return MembershipResult(verdict, viol, float(worst), budget, pop)
