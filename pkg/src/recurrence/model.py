"""Two-type branching model of tumour recurrence and its closed-form quantities.

Sensitive cells follow a subcritical birth-death process started from ``n``
cells.  Each sensitive cell spawns a resistant mutant at rate ``n**-alpha``;
every mutant founds a clone that evolves as a supercritical birth-death
process.  Recurrence is the first time the resistant population reaches
``beta * n``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import ConsistencyWarning, InvalidParams, InvalidTime, UnsupportedCriticalCase

# |lambda0 + lambda1| below this takes the degenerate branch of the ghost-clone bound
GHOST_BRANCH_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    n: int
    alpha: float
    r0: float
    d0: float
    r1: float
    d1: float
    beta: float = 1.0

    @property
    def lambda0(self) -> float:
        return self.r0 - self.d0

    @property
    def lambda1(self) -> float:
        return self.r1 - self.d1

    @property
    def mutation_rate(self) -> float:
        """Per-sensitive-cell mutation rate ``n**-alpha``."""
        return float(self.n) ** (-self.alpha)

    @property
    def threshold(self) -> float:
        return self.beta * self.n

    def replace(self, **changes) -> "ModelParams":
        fields = {k: getattr(self, k) for k in ("n", "alpha", "r0", "d0", "r1", "d1", "beta")}
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class LimitConstants:
    clone_count_coef: float
    simpson_coef: float
    u_limit: float
    survival_prob: float
    extinction_prob: float


def validate_params(raw: ModelParams) -> ModelParams:
    """Check the model's sign and range constraints.

    Raises :class:`InvalidParams` naming the offending field.  Emits a
    :class:`ConsistencyWarning` (but still returns) when
    ``alpha >= min(1, lambda1 / |lambda0|)``.
    """
    for name in ("r0", "d0", "r1", "d1"):
        value = getattr(raw, name)
        if not value >= 0 or not math.isfinite(value):
            raise InvalidParams(name, f"rate must be finite and non-negative, got {value!r}")
    if not raw.n >= 1:
        raise InvalidParams("n", f"initial burden must be >= 1, got {raw.n!r}")
    if not raw.beta >= 1:
        raise InvalidParams("beta", f"recurrence multiplier must be >= 1, got {raw.beta!r}")
    if not 0 < raw.alpha < 1:
        raise InvalidParams("alpha", f"mutation exponent must lie in (0, 1), got {raw.alpha!r}")
    if not raw.lambda0 < 0:
        raise InvalidParams("lambda0", f"lambda0 not negative (r0 - d0 = {raw.lambda0!r})")
    if not raw.lambda1 > 0:
        raise InvalidParams("lambda1", f"lambda1 not positive (r1 - d1 = {raw.lambda1!r})")
    bound = min(1.0, raw.lambda1 / -raw.lambda0)
    if raw.alpha >= bound:
        warnings.warn(
            f"alpha={raw.alpha} >= min(1, lambda1/|lambda0|)={bound:.6g}; "
            "estimators are not guaranteed consistent here",
            ConsistencyWarning,
            stacklevel=2,
        )
    return raw


def _check_time(t):
    if not t >= 0:
        raise InvalidTime(f"time must be >= 0, got {t!r}")


def mean_sensitive(p: ModelParams, t: float) -> float:
    return p.n * math.exp(p.lambda0 * t)


def mean_resistant(p: ModelParams, t: float) -> float:
    if t == 0:
        return 0.0
    gap = p.lambda1 - p.lambda0
    # e^{l1 t}(1 - e^{-gap t}) / gap, assembled in log space so large t gives inf, not an error
    log_mag = ((1.0 - p.alpha) * math.log(p.n) + p.lambda1 * t
               + math.log(-math.expm1(-gap * t) / gap))
    return math.exp(log_mag) if log_mag < 709.0 else math.inf


def mean_curves(p: ModelParams, t: float) -> tuple[float, float]:
    """Expected sensitive and resistant counts at time ``t``."""
    _check_time(t)
    return mean_sensitive(p, t), mean_resistant(p, t)


def zeta(p: ModelParams, rtol: float = 1e-10) -> float:
    """Deterministic recurrence time: the root of ``E[Z1](t) = n``.

    Bisection on ``[0, 2 (alpha/lambda1) log n + 10/lambda1]``, doubling the
    upper end until the root is bracketed.
    """
    n = float(p.n)
    lo = 0.0
    hi = 2.0 * (p.alpha / p.lambda1) * math.log(n) + 10.0 / p.lambda1
    while mean_resistant(p, hi) < n:
        hi *= 2.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mean_resistant(p, mid) < n:
            lo = mid
        else:
            hi = mid
    # pick whichever endpoint has the smaller residual
    best = min((lo, hi), key=lambda s: abs(mean_resistant(p, s) - n))
    residual = abs(mean_resistant(p, best) - n) / n
    if residual >= rtol:
        raise ArithmeticError(f"zeta bisection stalled with relative residual {residual:.3g}")
    return best


def limit_constants(p: ModelParams) -> LimitConstants:
    lam0, lam1, r1 = p.lambda0, p.lambda1, p.r1
    return LimitConstants(
        clone_count_coef=-lam1 / (lam0 * r1),
        simpson_coef=2.0 * r1 * (lam1 - lam0) ** 2 / (lam1 * (2.0 * lam1 - lam0)),
        u_limit=-lam0 / lam1,
        survival_prob=lam1 / r1,
        extinction_prob=p.d1 / r1,
    )


@dataclass(frozen=True)
class ExpectedClones:
    ever_created: float
    infinite_lineage: float
    ghost_bound: float


def expected_clones(p: ModelParams, t: float, c1: float = 1.0) -> ExpectedClones:
    """Expected clone counts founded in ``(0, t)``.

    ``ghost_bound`` bounds the expected number of clones alive at ``t`` but
    destined for extinction.  It holds only up to the unspecified tail
    constant ``c1`` of the extinction-time bound, which the caller supplies.
    """
    _check_time(t)
    if not c1 > 0:
        raise ValueError(f"c1 must be positive, got {c1!r}")
    lam0, lam1 = p.lambda0, p.lambda1
    scale = float(p.n) ** (1.0 - p.alpha)
    ever = scale * -math.expm1(lam0 * t) / -lam0
    infinite = (lam1 / p.r1) * ever
    prefactor = c1 * p.d1 / p.r1
    s = lam0 + lam1
    if abs(s) < GHOST_BRANCH_TOL:
        ghost = prefactor * t * math.exp(-lam1 * t)
    else:
        # (e^{l0 t} - e^{-l1 t}) / s == e^{-l1 t} expm1(s t) / s
        ghost = prefactor * math.exp(-lam1 * t) * math.expm1(s * t) / s
    return ExpectedClones(ever, infinite, scale * ghost)


def bd_second_moment(r: float, d: float, z0: int, t: float) -> float:
    """``E[Z(t)^2]`` for a linear birth-death process started from ``z0`` cells."""
    if r == d:
        raise UnsupportedCriticalCase("critical process (r == d) is not supported")
    _check_time(t)
    if z0 < 1:
        raise ValueError(f"z0 must be >= 1, got {z0!r}")
    lam = r - d
    g = math.exp(lam * t)
    if z0 == 1:
        return (2.0 * r / lam) * g * g - ((r + d) / lam) * g
    return z0 * ((r + d) / lam) * g * (g - 1.0) + float(z0) ** 2 * g * g
