"""Independent numerical checks of the simulator and the closed forms.

``master_equation_dist`` integrates the forward equation of a linear
birth-death process directly and shares no sampling code with the engine.
``verify_suite`` runs the Monte Carlo audit battery and returns one record per
check.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import engine
from .errors import SupportMismatch, TruncationTooSmall
from .estimators import simpson_index, surviving_clone_count
from .model import (
    ModelParams,
    bd_second_moment,
    expected_clones,
    limit_constants,
    mean_curves,
    zeta,
)
from .rng import replicate_seed

LEAK_GATE = 1e-6

THETA_STAR = ModelParams(n=10_000, alpha=0.5, r0=0.5, d0=1.0, r1=1.5, d1=1.0)


@dataclass(frozen=True)
class TruncatedDistribution:
    probs: np.ndarray
    truncation: int
    leaked_mass: float

    def moment(self, k: int) -> float:
        states = np.arange(self.truncation + 1, dtype=float)
        return float(np.dot(states**k, self.probs))


def default_truncation(r: float, d: float, z0: int, t: float) -> int:
    """Four times the mean plus ten standard deviations."""
    lam = r - d
    mean = z0 * math.exp(lam * t)
    if lam == 0:
        var = z0 * (r + d) * t
    else:
        var = bd_second_moment(r, d, z0, t) - mean * mean
    return int(math.ceil(4 * mean + 10 * math.sqrt(max(var, 0.0)))) + 1


def master_equation_dist(r: float, d: float, z0: int, t: float,
                         truncation: Optional[int] = None,
                         rtol: float = 1e-10) -> TruncatedDistribution:
    """Law of a linear birth-death process at time ``t`` on states ``0..S``.

    Births out of state ``S`` are collected as leaked mass.  An explicit
    ``truncation`` whose leak reaches ``LEAK_GATE`` raises
    :class:`TruncationTooSmall`; the default truncation is doubled until the
    leak passes the gate.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if truncation is None:
        s = default_truncation(r, d, z0, t)
        while True:
            try:
                return _integrate(r, d, z0, t, s, rtol)
            except TruncationTooSmall:
                s *= 2
    return _integrate(r, d, z0, t, int(truncation), rtol)


def _integrate(r, d, z0, t, s, rtol):
    if s < z0:
        raise TruncationTooSmall(f"truncation {s} is below the initial state {z0}")
    k = np.arange(s + 1, dtype=float)
    birth = r * k
    death = d * k

    def rhs(_, y):
        p = y[:-1]
        dp = -(birth + death) * p
        dp[1:] += birth[:-1] * p[:-1]
        dp[:-1] += death[1:] * p[1:]
        return np.append(dp, birth[-1] * p[-1])

    y0 = np.zeros(s + 2)
    y0[z0] = 1.0
    if t == 0:
        y = y0
    else:
        sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=rtol, atol=1e-14)
        if not sol.success:
            raise RuntimeError(sol.message)
        y = sol.y[:, -1]
    probs = np.clip(y[:-1], 0.0, None)
    leaked = float(max(y[-1], 0.0))
    if leaked >= LEAK_GATE:
        raise TruncationTooSmall(f"leaked mass {leaked:.3g} at truncation {s}")
    return TruncatedDistribution(probs, s, leaked)


def empirical_histogram(samples, truncation: int) -> tuple[np.ndarray, float]:
    """Frequencies on ``0..truncation`` plus the fraction of samples beyond it."""
    samples = np.asarray(samples, dtype=np.int64)
    inside = samples[samples <= truncation]
    hist = np.bincount(inside, minlength=truncation + 1).astype(float) / samples.size
    return hist, float((samples > truncation).mean())


def total_variation(a: TruncatedDistribution, b, b_overflow: float = 0.0) -> float:
    """Half the L1 distance; mass outside ``0..S`` on either side counts in full."""
    b = np.asarray(b, dtype=float)
    if b.shape != a.probs.shape:
        raise SupportMismatch(f"support sizes differ: {b.shape} vs {a.probs.shape}")
    return 0.5 * (float(np.abs(a.probs - b).sum()) + a.leaked_mass + b_overflow)


@dataclass
class CheckResult:
    check: str
    statistic: float
    expected: float
    se: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["verdict"] = "pass" if self.passed else "fail"
        return out


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _within(name, sample, expected, k_se=4.0, rel_allowance=0.0, detail=None):
    mean, se = _mean_se(sample)
    threshold = k_se * se + rel_allowance * abs(expected)
    return CheckResult(name, mean, expected, se, threshold,
                       abs(mean - expected) <= threshold, detail or {})


Simulator = Callable[..., engine.SimOutcome]


def audit_mean_curves(seed: int, p: ModelParams = THETA_STAR, times=(1.0, 2.0, 4.0),
                      replicates: int = 2000, simulator: Simulator = engine.simulate):
    # runs that die out before a snapshot time contribute zeros there
    z0 = np.zeros((replicates, len(times)))
    z1 = np.zeros((replicates, len(times)))
    horizon = max(times)
    for i in range(replicates):
        out = simulator(p, replicate_seed(seed, i), record_times=times, horizon=horizon)
        for j, snap in enumerate(out.snapshots):
            z0[i, j] = snap.z0
            z1[i, j] = snap.z1
    results = []
    for j, t in enumerate(times):
        phi0, phi1 = mean_curves(p, t)
        results.append(_within(f"mean_curve.z0.t={t:g}", z0[:, j], phi0))
        results.append(_within(f"mean_curve.z1.t={t:g}", z1[:, j], phi1))
    return results


def audit_clone_count(seed: int, p: ModelParams = THETA_STAR, replicates: int = 500,
                      escape_size: int = 1000, simulator: Simulator = engine.simulate):
    t = zeta(p)
    infinite = np.empty(replicates)
    surviving = np.empty(replicates)
    for i in range(replicates):
        s = replicate_seed(seed, i)
        out = simulator(p, s, record_times=(t,), horizon=t)
        flags = engine.classify_lineages(out.snapshots[0], p, s + 1, escape_size)
        infinite[i] = flags.infinite_count
        surviving[i] = flags.surviving_count
    expected = expected_clones(p, t).infinite_lineage
    res = _within("clone_count.infinite_at_zeta", infinite, expected)
    subset_ok = bool(np.all(surviving >= infinite))
    subset = CheckResult("clone_count.surviving_ge_infinite", float(subset_ok), 1.0, 0.0, 0.0,
                         subset_ok)
    return [res, subset]


def audit_recurrence_limits(seed: int, p: ModelParams = THETA_STAR.replace(n=100_000),
                            replicates: int = 200, allowance: float = 0.10,
                            simulator: Simulator = engine.simulate):
    scale = float(p.n) ** (1.0 - p.alpha)
    simpson = []
    clones = []
    for i in range(replicates):
        out = simulator(p, replicate_seed(seed, i))
        if out.termination != engine.RECURRENCE:
            continue
        simpson.append(scale * simpson_index(out.clone_sizes))
        clones.append(surviving_clone_count(out.clone_sizes) / scale)
    lc = limit_constants(p)
    detail = {"recurrences": len(simpson), "replicates": replicates}
    return [
        _within("simpson_limit", simpson, lc.simpson_coef, rel_allowance=allowance, detail=detail),
        _within("clone_count_limit", clones, lc.clone_count_coef, rel_allowance=allowance,
                detail=detail),
    ]


def audit_extinction(seed: int, r: float = 1.5, d: float = 1.0, escape: int = 1000,
                     runs: int = 100_000):
    extinct = engine.birth_death_extinctions(r, d, 1, escape, runs, seed)
    freq = float(extinct.mean())
    q = d / r
    se = math.sqrt(q * (1 - q) / runs)
    return [CheckResult("extinction_probability", freq, q, se, 3 * se, abs(freq - q) <= 3 * se)]


def audit_master_equation(seed: int, r: float = 1.5, d: float = 1.0, t: float = 1.0,
                          samples: int = 100_000, tv_gate: float = 0.02):
    endpoints = engine.birth_death_endpoints(r, d, 1, t, samples, seed)
    dist = master_equation_dist(r, d, 1, t)
    hist, overflow = empirical_histogram(endpoints, dist.truncation)
    tv = total_variation(dist, hist, overflow)
    results = [CheckResult("oracle.total_variation", tv, 0.0, 0.0, tv_gate, tv < tv_gate,
                           {"truncation": dist.truncation, "leaked_mass": dist.leaked_mass})]
    results.append(_within("oracle.second_moment", endpoints.astype(float) ** 2,
                           bd_second_moment(r, d, 1, t)))
    return results


AUDITS = {
    "mean_curves": audit_mean_curves,
    "clone_count": audit_clone_count,
    "recurrence_limits": audit_recurrence_limits,
    "extinction": audit_extinction,
    "master_equation": audit_master_equation,
}


def verify_suite(seed: int, config: Optional[dict] = None) -> list[CheckResult]:
    """Run the audit battery.

    ``config`` maps audit names to keyword overrides; when omitted every audit
    runs with its defaults.  An empty mapping runs nothing.  Results are
    ordered by audit name.
    """
    if config is None:
        config = {name: {} for name in AUDITS}
    results = []
    for name in sorted(config):
        if name not in AUDITS:
            raise KeyError(f"unknown audit {name!r}; choose from {sorted(AUDITS)}")
        results.extend(AUDITS[name](seed, **(config[name] or {})))
    return results


def report_json(results: list[CheckResult]) -> str:
    return json.dumps({"passed": all(r.passed for r in results),
                       "checks": [r.as_dict() for r in results]}, indent=2)
