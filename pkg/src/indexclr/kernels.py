"""Biweight kernel family, bandwidth rule and scale estimation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from indexclr.errors import DegenerateScaleError, InvalidConfigError

SUPPORTED_ORDERS = (2, 4, 6)
BIWEIGHT_AT_ZERO = 15.0 / 16.0


@dataclass(frozen=True)
class KernelConfig:
    """Bandwidth ``h = scale * n**(-rate)`` and kernel order for the full-covariate route.

    ``leave_one_out`` controls whether observation ``i`` enters its own
    Nadaraya-Watson fit. ``None`` picks the route default: included on the
    index route, excluded on the full route, where the self weight
    ``k_p(0)^d`` of a high-order product kernel shrinks the residuals and
    understates the studentizing scale.
    """

    scale: float
    rate: float = 0.2
    order_p: int = 2
    leave_one_out: bool | None = None

    def __post_init__(self):
        if self.order_p not in SUPPORTED_ORDERS:
            raise InvalidConfigError(f"kernel order must be one of {SUPPORTED_ORDERS}, got {self.order_p}")
        if not self.scale > 0:
            raise InvalidConfigError(f"bandwidth scale must be positive, got {self.scale}")
        if not 0 < self.rate < 1:
            raise InvalidConfigError(f"bandwidth rate must lie in (0, 1), got {self.rate}")


def resolve_leave_one_out(cfg: KernelConfig, approach: str) -> bool:
    if cfg.leave_one_out is not None:
        return cfg.leave_one_out
    return approach == "full"


def biweight(u):
    """``(15/16) (1 - u^2)^2`` on ``|u| <= 1``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    w = np.clip(1.0 - u * u, 0.0, None)
    return BIWEIGHT_AT_ZERO * w * w


def _biweight_moment(k: int) -> Fraction:
    # int_{-1}^{1} u^(2k) (1 - u^2)^2 du
    return 2 * (Fraction(1, 2 * k + 1) - Fraction(2, 2 * k + 3) + Fraction(1, 2 * k + 5))


def _solve_exact(A, rhs):
    n = len(rhs)
    M = [list(row) + [r] for row, r in zip(A, rhs)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


@lru_cache(maxsize=None)
def biweight_coefficients(p: int) -> tuple[Fraction, ...]:
    """Coefficients ``a_j`` of ``Q_p(u^2) = sum_j a_j u^(2j)``.

    ``Q_p(u^2) (1 - u^2)^2`` integrates to one and has vanishing even moments
    of order ``2..p-2``; odd moments vanish by symmetry.
    """
    if p not in SUPPORTED_ORDERS:
        raise InvalidConfigError(f"kernel order must be one of {SUPPORTED_ORDERS}, got {p}")
    m = p // 2
    A = [[_biweight_moment(i + j) for j in range(m)] for i in range(m)]
    rhs = [Fraction(1)] + [Fraction(0)] * (m - 1)
    return tuple(_solve_exact(A, rhs))


def higher_order_biweight(p, u):
    """Order-``p`` biweight kernel; ``p = 2`` is the ordinary biweight."""
    if p == 2:
        return biweight(u)
    coefs = [float(a) for a in biweight_coefficients(p)]
    u = np.asarray(u, dtype=float)
    u2 = u * u
    w = np.clip(1.0 - u2, 0.0, None)
    return np.polynomial.polynomial.polyval(u2, coefs) * w * w


def bandwidth(n, cfg: KernelConfig) -> float:
    return cfg.scale * float(n) ** (-cfg.rate)


def sample_std(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DegenerateScaleError("standard deviation needs at least two values")
    s = float(np.std(values, ddof=1))
    if not s > 0:
        raise DegenerateScaleError("zero sample variance (constant covariate or index)")
    return s


def index_kernel_weight(xi, v, b, model, h, s_b, s_gamma) -> float:
    """Product biweight weight of observation ``xi`` at evaluation point ``v``.

    ``v`` has attributes ``x``, ``gamma`` and ``c``; the two index differences
    are standardized by ``s_b * h`` and ``s_gamma * h``.
    """
    c = v.c
    du_b = (model.g(v.x, c, b) - model.g(xi, c, b)) / (s_b * h)
    du_g = (model.g(v.x, c, v.gamma) - model.g(xi, c, v.gamma)) / (s_gamma * h)
    return float(biweight(du_b) * biweight(du_g))


def full_kernel_weight(xi, x, h, scales, p) -> float:
    u = (np.asarray(x, dtype=float) - np.asarray(xi, dtype=float)) / (np.asarray(scales, dtype=float) * h)
    return float(np.prod(higher_order_biweight(p, u)))
