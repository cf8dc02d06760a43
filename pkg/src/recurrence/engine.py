"""Exact event-by-event simulation of the sensitive/resistant process.

The hot loop is a numba kernel.  Resistant clones are selected through a
Fenwick tree keyed by clone index whose leaves hold clone sizes, so picking
the clone that a birth or death hits costs O(log K) for K clones.

Random numbers come from numpy's PCG64 seeded with the integer ``seed``; the
stream layout (one exponential waiting time and one uniform channel draw per
event, plus a uniform clone pick and a uniform birth/death split for resistant
events, plus a thinning uniform in the capacity variant) is fixed for
``ENGINE_VERSION``.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConsistencyWarning, InvalidCapacity
from .model import ModelParams

log = logging.getLogger(__name__)

ENGINE_VERSION = 1

RECURRENCE = "Recurrence"
EXTINCT = "Extinct"
CAP_REACHED = "CapReached"
HORIZON = "Horizon"

DEFAULT_MAX_EVENTS = 20_000_000_000
CHUNK_EVENTS = 50_000_000
_INITIAL_CAPACITY = 1024

# kernel status codes
_ST_BUDGET = 0
_ST_RECURRENCE = 1
_ST_EXTINCT = 2
_ST_STOP_TIME = 3
_ST_GROW = 4

# float state slots
_T, _PENDING, _GAMMA = 0, 1, 2
# int state slots
_Z0, _Z1, _K, _EVENTS = 0, 1, 2, 3


@numba.njit(cache=True, nogil=True)
def _fenwick_add(tree, i, delta):
    cap = tree.shape[0] - 1
    j = i + 1
    while j <= cap:
        tree[j] += delta
        j += j & (-j)


@numba.njit(cache=True, nogil=True)
def _fenwick_total(tree):
    cap = tree.shape[0] - 1
    total = 0
    j = cap
    while j > 0:
        total += tree[j]
        j -= j & (-j)
    return total


@numba.njit(cache=True, nogil=True)
def _fenwick_find(tree, cell):
    """0-based index of the clone holding 0-based cell number ``cell``."""
    cap = tree.shape[0] - 1
    pos = 0
    rem = cell
    step = 1
    while step * 2 <= cap:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= cap and tree[nxt] <= rem:
            pos = nxt
            rem -= tree[nxt]
        step >>= 1
    return pos


@numba.njit(cache=True, nogil=True)
def _fenwick_build(tree, sizes, k):
    tree[:] = 0
    cap = tree.shape[0] - 1
    for i in range(k):
        tree[i + 1] += sizes[i]
    for j in range(1, cap + 1):
        parent = j + (j & (-j))
        if parent <= cap:
            tree[parent] += tree[j]


@numba.njit(cache=True, nogil=True)
def _advance(rng, rates, capacity, threshold, stop_on_threshold, t_stop,
             max_events, st_f, st_i, sizes, born, tree, debug):
    """Run events until a stop condition and report which one fired.

    A waiting time that would cross ``t_stop`` is parked in ``st_f[_PENDING]``
    and reused on resumption, so stopping for a snapshot does not perturb the
    trajectory.
    """
    r0 = rates[0]
    d0 = rates[1]
    mu = rates[2]
    r1 = rates[3]
    d1 = rates[4]
    a0 = r0 + d0 + mu
    b1 = r1 + d1
    thinning = capacity < np.inf
    cap = sizes.shape[0]

    t = st_f[_T]
    pending = st_f[_PENDING]
    z0 = st_i[_Z0]
    z1 = st_i[_Z1]
    k = st_i[_K]
    events = st_i[_EVENTS]
    status = _ST_BUDGET

    while True:
        if events >= max_events:
            status = _ST_BUDGET
            break
        if k == cap and z0 > 0:
            status = _ST_GROW
            break
        total = a0 * z0 + b1 * z1
        if total <= 0.0:
            status = _ST_EXTINCT
            break
        if pending >= 0.0:
            t_next = pending
        else:
            t_next = t + rng.exponential() / total
        if t_next > t_stop:
            pending = t_next
            t = t_stop
            status = _ST_STOP_TIME
            break
        pending = -1.0
        t = t_next
        events += 1

        x = rng.random() * total
        if x < a0 * z0:
            if x < r0 * z0:
                z0 += 1
            elif x < (r0 + d0) * z0:
                z0 -= 1
            else:
                sizes[k] = 1
                born[k] = t
                _fenwick_add(tree, k, 1)
                k += 1
                z1 += 1
        else:
            cell = np.int64(rng.random() * z1)
            if cell >= z1:
                cell = z1 - 1
            idx = _fenwick_find(tree, cell)
            if rng.random() * b1 < r1:
                if thinning:
                    accept = 1.0 - (z0 + z1) / capacity
                    if accept <= 0.0 or rng.random() >= accept:
                        continue
                sizes[idx] += 1
                _fenwick_add(tree, idx, 1)
                z1 += 1
            else:
                sizes[idx] -= 1
                _fenwick_add(tree, idx, -1)
                z1 -= 1

        if debug:
            if _fenwick_total(tree) != z1 or z0 < 0 or z1 < 0:
                raise AssertionError("ledger out of sync with rate index")

        if z1 >= threshold and not (st_f[_GAMMA] == st_f[_GAMMA]):
            st_f[_GAMMA] = t
            if stop_on_threshold:
                status = _ST_RECURRENCE
                break

    st_f[_T] = t
    st_f[_PENDING] = pending
    st_i[_Z0] = z0
    st_i[_Z1] = z1
    st_i[_K] = k
    st_i[_EVENTS] = events
    return status


@dataclass(frozen=True)
class Snapshot:
    time: float
    z0: int
    z1: int
    clone_sizes: np.ndarray = field(repr=False)

    @property
    def n_clones_alive(self) -> int:
        return int(np.count_nonzero(self.clone_sizes))


@dataclass(frozen=True)
class SimOutcome:
    """Terminal record of one trajectory.

    ``gamma`` is the first time the resistant count reached the recurrence
    threshold; it is set whenever that happened, including runs that were
    followed past recurrence to a horizon.
    """

    termination: str
    gamma: float | None
    time_at_end: float
    z0_at_end: int
    clone_sizes: np.ndarray = field(repr=False)
    founding_times: np.ndarray = field(repr=False)
    event_count: int
    seed: int
    snapshots: tuple[Snapshot, ...] = field(default=(), repr=False)

    @property
    def z1_at_end(self) -> int:
        return int(self.clone_sizes.sum())

    @property
    def observed_sizes(self) -> np.ndarray:
        """Sizes of clones alive at the end, in ledger order."""
        return self.clone_sizes[self.clone_sizes > 0]


class _State:
    def __init__(self, z0, clone_sizes=()):
        k = len(clone_sizes)
        cap = _INITIAL_CAPACITY
        while cap < k + 1:
            cap *= 2
        self.sizes = np.zeros(cap, dtype=np.int64)
        self.born = np.zeros(cap, dtype=np.float64)
        self.tree = np.zeros(cap + 1, dtype=np.int64)
        self.sizes[:k] = clone_sizes
        _fenwick_build(self.tree, self.sizes, k)
        self.f = np.array([0.0, -1.0, np.nan])
        self.i = np.array([z0, int(np.sum(clone_sizes)), k, 0], dtype=np.int64)

    def grow(self):
        k = int(self.i[_K])
        cap = 2 * self.sizes.shape[0]
        sizes = np.zeros(cap, dtype=np.int64)
        born = np.zeros(cap, dtype=np.float64)
        sizes[:k] = self.sizes[:k]
        born[:k] = self.born[:k]
        self.sizes, self.born = sizes, born
        self.tree = np.zeros(cap + 1, dtype=np.int64)
        _fenwick_build(self.tree, self.sizes, k)

    def check(self):
        k = int(self.i[_K])
        z1 = int(self.i[_Z1])
        if self.i[_Z0] < 0 or (k and self.sizes[:k].min() < 0):
            raise AssertionError("negative population count")
        if int(self.sizes[:k].sum()) != z1 or int(_fenwick_total(self.tree)) != z1:
            raise AssertionError("clone ledger out of sync with cached resistant total")


def _run(rates, *, z0, threshold, seed, capacity=math.inf, record_times=(),
         horizon=None, max_events=DEFAULT_MAX_EVENTS, debug=False, clone_sizes=()):
    rng = np.random.Generator(np.random.PCG64(seed))
    state = _State(z0, clone_sizes)
    rates = np.asarray(rates, dtype=np.float64)
    wanted = {float(t) for t in record_times if horizon is None or t <= horizon}
    stops = sorted(wanted | ({float(horizon)} if horizon is not None else set()))
    stop_on_threshold = horizon is None
    snapshots = []
    stop_idx = 0
    termination = None

    while termination is None:
        t_stop = stops[stop_idx] if stop_idx < len(stops) else math.inf
        budget = min(max_events, int(state.i[_EVENTS]) + CHUNK_EVENTS)
        status = _advance(rng, rates, float(capacity), float(threshold), stop_on_threshold,
                          t_stop, budget, state.f, state.i, state.sizes, state.born,
                          state.tree, debug)
        if status == _ST_GROW:
            state.grow()
        elif status == _ST_STOP_TIME:
            k = int(state.i[_K])
            is_horizon = horizon is not None and stop_idx == len(stops) - 1
            if t_stop in wanted:
                snapshots.append(Snapshot(t_stop, int(state.i[_Z0]), int(state.i[_Z1]),
                                          state.sizes[:k].copy()))
            stop_idx += 1
            if is_horizon:
                termination = HORIZON
        elif status == _ST_RECURRENCE:
            termination = RECURRENCE
        elif status == _ST_EXTINCT:
            termination = EXTINCT
        elif state.i[_EVENTS] >= max_events:
            termination = CAP_REACHED
        else:
            log.info("simulation seed=%d: %d events, t=%.4g, z0=%d, z1=%d",
                     seed, state.i[_EVENTS], state.f[_T], state.i[_Z0], state.i[_Z1])

    state.check()
    k = int(state.i[_K])
    gamma = float(state.f[_GAMMA])
    return SimOutcome(
        termination=termination,
        gamma=None if math.isnan(gamma) else gamma,
        time_at_end=float(state.f[_T]),
        z0_at_end=int(state.i[_Z0]),
        clone_sizes=state.sizes[:k].copy(),
        founding_times=state.born[:k].copy(),
        event_count=int(state.i[_EVENTS]),
        seed=int(seed),
        snapshots=tuple(snapshots),
    )


def _rates(p: ModelParams):
    return (p.r0, p.d0, p.mutation_rate, p.r1, p.d1)


def simulate(p: ModelParams, seed: int, *, max_events: int = DEFAULT_MAX_EVENTS,
             record_times=(), horizon: float | None = None, debug: bool = False) -> SimOutcome:
    """Simulate from ``n`` sensitive cells until recurrence, extinction or the event cap.

    With ``horizon`` set the run ignores the recurrence stop and is followed
    to that time instead (termination ``"Horizon"``); ``gamma`` still records
    the first passage.  ``record_times`` adds snapshots of the state at those
    times without perturbing the trajectory.  ``debug`` checks the clone
    ledger against the rate index after every event.
    """
    if max_events < 1:
        raise ValueError("max_events must be >= 1")
    return _run(_rates(p), z0=int(p.n), threshold=p.threshold, seed=seed,
                record_times=tuple(record_times), horizon=horizon,
                max_events=max_events, debug=debug)


def capacity_equilibrium(p: ModelParams, capacity: float) -> float:
    """Resistant population at which capped births balance deaths, ``C (1 - d1/r1)``."""
    return capacity * (1.0 - p.d1 / p.r1)


def simulate_capacity(p: ModelParams, capacity: float, seed: int, **opts) -> SimOutcome:
    """Like :func:`simulate` with resistant births scaled by ``1 - (z0+z1)/C``.

    Candidate births fire at rate ``r1`` per cell and are accepted with
    probability ``max(0, 1 - (z0+z1)/C)``.  ``event_count`` includes rejected
    candidates.
    """
    if not capacity > p.threshold:
        raise InvalidCapacity(f"capacity {capacity!r} must exceed beta*n = {p.threshold!r}")
    if capacity_equilibrium(p, capacity) <= p.threshold:
        warnings.warn(
            f"resistant equilibrium {capacity_equilibrium(p, capacity):.6g} does not exceed "
            f"beta*n; recurrence is exponentially unlikely", ConsistencyWarning, stacklevel=2)
    max_events = opts.pop("max_events", DEFAULT_MAX_EVENTS)
    if max_events < 1:
        raise ValueError("max_events must be >= 1")
    return _run(_rates(p), z0=int(p.n), threshold=p.threshold, seed=seed,
                capacity=float(capacity), max_events=max_events,
                record_times=tuple(opts.pop("record_times", ())), **opts)


def simulate_birth_death(r: float, d: float, z0: int, seed: int, *,
                         horizon: float | None = None, escape: float = math.inf,
                         max_events: int = DEFAULT_MAX_EVENTS) -> SimOutcome:
    """Single-type birth-death process from ``z0`` cells on the same kernel.

    Runs until extinction, until the population reaches ``escape`` (reported
    as ``"Recurrence"``), or until ``horizon``.
    """
    return _run((0.0, 0.0, 0.0, r, d), z0=0, threshold=escape, seed=seed,
                horizon=horizon, max_events=max_events, clone_sizes=(z0,))


@numba.njit(cache=True, nogil=True)
def _bd_endpoints(rng, r, d, z0, t_end, out):
    rates = np.array([0.0, 0.0, 0.0, r, d])
    for j in range(out.shape[0]):
        sizes = np.zeros(2, dtype=np.int64)
        born = np.zeros(2)
        tree = np.zeros(3, dtype=np.int64)
        sizes[0] = z0
        _fenwick_build(tree, sizes, 1)
        st_f = np.array([0.0, -1.0, np.nan])
        st_i = np.array([0, z0, 1, 0], dtype=np.int64)
        _advance(rng, rates, np.inf, np.inf, False, t_end, np.int64(1) << 62,
                 st_f, st_i, sizes, born, tree, False)
        out[j] = st_i[_Z1]


@numba.njit(cache=True, nogil=True)
def _bd_fates(rng, r, d, z0, escape, out):
    rates = np.array([0.0, 0.0, 0.0, r, d])
    for j in range(out.shape[0]):
        sizes = np.zeros(2, dtype=np.int64)
        born = np.zeros(2)
        tree = np.zeros(3, dtype=np.int64)
        sizes[0] = z0
        _fenwick_build(tree, sizes, 1)
        st_f = np.array([0.0, -1.0, np.nan])
        st_i = np.array([0, z0, 1, 0], dtype=np.int64)
        status = _advance(rng, rates, np.inf, escape, True, np.inf, np.int64(1) << 62,
                          st_f, st_i, sizes, born, tree, False)
        out[j] = status == _ST_EXTINCT


def birth_death_endpoints(r: float, d: float, z0: int, t: float, n_samples: int,
                          seed: int) -> np.ndarray:
    """Population sizes at time ``t`` of ``n_samples`` independent runs."""
    out = np.zeros(n_samples, dtype=np.int64)
    _bd_endpoints(np.random.Generator(np.random.PCG64(seed)), float(r), float(d),
                  int(z0), float(t), out)
    return out


def birth_death_extinctions(r: float, d: float, z0: int, escape: int, n_samples: int,
                            seed: int) -> np.ndarray:
    """Boolean array: did each run hit 0 before reaching ``escape`` cells."""
    out = np.zeros(n_samples, dtype=np.bool_)
    _bd_fates(np.random.Generator(np.random.PCG64(seed)), float(r), float(d),
              int(z0), float(escape), out)
    return out


@numba.njit(cache=True, nogil=True)
def _escapes(rng, sizes, p_birth, escape, out):
    for j in range(sizes.shape[0]):
        x = sizes[j]
        if x <= 0:
            out[j] = False
            continue
        while 0 < x < escape:
            if rng.random() < p_birth:
                x += 1
            else:
                x -= 1
        out[j] = x >= escape


@dataclass(frozen=True)
class LineageFlags:
    extinct_by_end: np.ndarray
    surviving: np.ndarray
    classified_infinite: np.ndarray

    @property
    def surviving_count(self) -> int:
        return int(self.surviving.sum())

    @property
    def infinite_count(self) -> int:
        return int(self.classified_infinite.sum())


def classify_lineages(outcome, p: ModelParams, seed: int, escape_size: int = 1000) -> LineageFlags:
    """Flag which clones will (most likely) never die out.

    Each surviving clone is continued privately with rates ``r1``, ``d1``
    until it reaches ``escape_size`` (classified infinite) or dies.  A clone
    that escapes still goes extinct with probability ``(d1/r1)**escape_size``,
    which bounds the misclassification rate per clone.

    ``outcome`` is a :class:`SimOutcome` or a :class:`Snapshot`.
    """
    if escape_size < 100:
        raise ValueError("escape_size must be >= 100")
    sizes = np.asarray(outcome.clone_sizes, dtype=np.int64)
    surviving = sizes > 0
    infinite = np.zeros(sizes.shape[0], dtype=np.bool_)
    # the embedded jump chain suffices: only the order of births and deaths matters
    _escapes(np.random.Generator(np.random.PCG64(seed)), sizes, p.r1 / (p.r1 + p.d1),
             int(escape_size), infinite)
    return LineageFlags(~surviving, surviving, infinite)


def write_snapshots_csv(outcome: SimOutcome, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "z0", "z1", "n_clones_alive"])
        for snap in outcome.snapshots:
            writer.writerow([repr(snap.time), snap.z0, snap.z1, snap.n_clones_alive])
