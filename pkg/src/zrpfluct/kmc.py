"""Event-driven simulation of the weakly asymmetric zero-range process.

Time inside the event loop is microscopic: a particle of species ``i`` at a
site with occupancy ``k`` jumps at rate ``g_i(k)``, to the right with
probability ``p = 1/2 + c / N**gamma``. Macroscopic time is microscopic
time divided by ``N**2``; observers and ``SimParams.T`` use macroscopic time.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse, special
from scipy.sparse.linalg import eigsh

from zrpfluct.constants import (
    MAX_CANONICAL_STATES,
    TREE_REBUILD_EVENTS,
    TREE_REBUILD_TOL,
)
from zrpfluct.ensemble import DensityPoint, sample_marginal
from zrpfluct.errors import NumericalError, StateSpaceTooLarge, ValidationError
from zrpfluct.fenwick import FenwickTree
from zrpfluct.rates import Occupancy, RateFamily, log_g_factorial, occupancies

_logger = logging.getLogger(__name__)

UNIFORM_BATCH = 8192
DENSE_EIGEN_LIMIT = 4000


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Return the counter-based stream of one replica."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, replica]))
    )


@dataclass(frozen=True)
class SimParams:
    """Size, asymmetry and horizon of one simulation."""

    N: int  # pylint: disable=invalid-name
    gamma: float = 1.0
    c: float = 0.0
    T: float = 1.0  # pylint: disable=invalid-name
    seed: int = 0
    record_times: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        """Reject parameters with no valid jump probabilities."""
        times = tuple(float(t) for t in self.record_times)
        object.__setattr__(self, "record_times", times)
        violations = self.validate()
        if violations:
            raise ValidationError("invalid simulation parameters", violations)

    def validate(self) -> List[str]:
        """Return every violated constraint."""
        violations = []
        if self.N < 2:
            violations.append(f"N={self.N} must be at least 2")
        if not self.gamma > 0:
            violations.append(f"gamma={self.gamma} must be positive")
        if not self.T > 0:
            violations.append(f"T={self.T} must be positive")
        if self.N >= 1 and not 0 <= self.p_right <= 1:
            violations.append(
                f"p(1)={self.p_right:.6g} outside [0, 1] for c={self.c}, "
                f"N={self.N}, gamma={self.gamma}"
            )
        times = self.record_times
        if any(b < a for a, b in zip(times, times[1:])):
            violations.append("record_times must be sorted")
        if times and (times[0] < 0 or times[-1] > self.T):
            violations.append(f"record_times must lie in [0, {self.T}]")
        return violations

    @property
    def p_right(self) -> float:
        return 0.5 + self.c / float(self.N) ** self.gamma

    @property
    def time_scale(self) -> float:
        """Microscopic time per unit of macroscopic time."""
        return float(self.N) ** 2

    @property
    def horizon(self) -> float:
        """Microscopic horizon ``N**2 T``."""
        return self.time_scale * self.T


class LatticeState:
    """Occupancies on the torus with cached rates and a rate tree."""

    def __init__(self, family: RateFamily, occupancy: np.ndarray) -> None:
        """Build the rate caches from an ``(N, n)`` occupancy array."""
        occupancy = np.asarray(occupancy)
        if occupancy.ndim != 2 or occupancy.shape[1] != family.n_species:
            raise ValidationError(
                f"occupancy must have shape (N, {family.n_species}), "
                f"got {occupancy.shape}"
            )
        if np.any(occupancy < 0):
            raise ValidationError("occupancy must be non-negative")
        self.family = family
        self.size = occupancy.shape[0]
        self.sites: List[Occupancy] = [tuple(int(v) for v in row) for row in occupancy]
        self.rates: List[Tuple[float, ...]] = [family.rates(k) for k in self.sites]
        self.tree = FenwickTree.from_values([sum(r) for r in self.rates])
        self.totals = occupancy.sum(axis=0).astype(np.int64)
        self.time = 0.0

    @property
    def n_species(self) -> int:
        return self.family.n_species

    @property
    def occupancy(self) -> np.ndarray:
        """Return the occupancy as an ``(N, n)`` unsigned array."""
        return np.array(self.sites, dtype=np.uint32).reshape(self.size, self.n_species)

    @property
    def total_rate(self) -> float:
        return self.tree.total

    def rate_matrix(self) -> np.ndarray:
        """Return ``g_i(alpha(x))`` as an ``(N, n)`` array."""
        return np.array(self.rates, dtype=float).reshape(self.size, self.n_species)

    def move(self, x: int, y: int, i: int) -> None:
        """Move one particle of species ``i`` from site ``x`` to site ``y``."""
        for site, delta in ((x, -1), (y, 1)):
            k = self.sites[site]
            new = k[:i] + (k[i] + delta,) + k[i + 1 :]
            rates = self.family.rates(new)
            self.sites[site] = new
            self.rates[site] = rates
            self.tree.set_value(site, sum(rates))

    def check_conservation(self) -> bool:
        """Return True when the species totals match the site sums."""
        return bool(np.array_equal(self.occupancy.sum(axis=0), self.totals))

    def rebuild_tree(self) -> float:
        """Recompute the rate tree and return the relative drift it had."""
        incremental = self.tree.total
        exact = math.fsum(sum(r) for r in self.rates)
        self.tree.rebuild([sum(r) for r in self.rates])
        if exact == 0:
            return abs(incremental)
        return abs(incremental - exact) / exact


def init_stationary(
    params: SimParams, point: DensityPoint, rng: np.random.Generator
) -> LatticeState:
    """Draw i.i.d. site occupancies from the product measure at ``point``."""
    occupancy = sample_marginal(point.table, rng, size=params.N)
    return LatticeState(point.family, occupancy)


class Observer:
    """Hooks called by ``run``; all times are macroscopic.

    ``advance`` and ``jump`` are only called when ``wants_events`` is set.
    ``record`` sees the state in force just before each record time.
    """

    wants_events = False

    def start(self, t: float, state: LatticeState, params: SimParams) -> None:
        """Called once before the first event."""

    def advance(self, t: float) -> None:
        """State has been constant since the previous call, up to ``t``."""

    def jump(self, x: int, y: int, i: int, state: LatticeState) -> None:
        """A particle of species ``i`` moved from ``x`` to ``y``."""

    def record(self, t: float, state: LatticeState) -> None:
        """Record time ``t`` was reached."""

    def finish(self, t: float, state: LatticeState) -> None:
        """Called once after the last event."""


@dataclass
class RunSummary:
    """Outcome of one trajectory."""

    events: int
    time: float
    micro_time: float
    stopped_early: bool = False
    reason: str = ""
    records: int = 0
    tree_drift: float = 0.0


class _Uniforms:
    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng
        self.buffer: List[float] = []
        self.index = 0

    def refill(self) -> None:
        self.buffer = self.rng.random(UNIFORM_BATCH).tolist()
        self.index = 0


def run(
    state: LatticeState,
    params: SimParams,
    observers: Sequence[Observer],
    rng: np.random.Generator,
) -> RunSummary:
    """Advance ``state`` up to macroscopic time ``params.T``.

    Exponential waiting times use the total rate, the jumping site is drawn
    from the rate tree, the species by a linear scan of the site rates and
    the direction with probability ``p(1)``. The loop stops early when the
    total rate is zero or not finite.
    """
    if state.size != params.N:
        raise ValidationError(f"state has {state.size} sites, params say N={params.N}")
    scale = params.time_scale
    horizon = params.horizon
    p_right = params.p_right
    size = state.size
    n = state.n_species
    tree = state.tree
    event_observers = [o for o in observers if o.wants_events]
    records = [t * scale for t in params.record_times if t * scale >= state.time]
    record_index = 0
    uniforms = _Uniforms(rng)
    summary = RunSummary(events=0, time=state.time / scale, micro_time=state.time)

    for observer in observers:
        observer.start(state.time / scale, state, params)

    def fire_records(until: float) -> None:
        nonlocal record_index
        while record_index < len(records) and records[record_index] < until:
            t_rec = records[record_index] / scale
            for observer in event_observers:
                observer.advance(t_rec)
            for observer in observers:
                observer.record(t_rec, state)
            record_index += 1
            summary.records += 1

    t = state.time
    past_horizon = float(np.nextafter(horizon, math.inf))
    since_rebuild = 0
    while True:
        total = tree.total
        if not total > 0 or not math.isfinite(total):
            summary.stopped_early = True
            if total == 0:
                summary.reason = "empty system: total rate is zero"
                fire_records(past_horizon)
                for observer in event_observers:
                    observer.advance(horizon / scale)
                t = horizon
            else:
                summary.reason = f"total rate is not finite ({total})"
            break
        if uniforms.index + 4 > len(uniforms.buffer):
            uniforms.refill()
        buf = uniforms.buffer
        j = uniforms.index
        uniforms.index = j + 4
        t_next = t - math.log1p(-buf[j]) / total
        fire_records(t_next)
        if t_next > horizon:
            t = horizon
            for observer in event_observers:
                observer.advance(horizon / scale)
            break
        for observer in event_observers:
            observer.advance(t_next / scale)
        t = t_next

        x = tree.find(buf[j + 1] * total)
        site_rates = state.rates[x]
        site_total = sum(site_rates)
        while not site_total > 0:
            # round-off landed on an empty site
            x = (x - 1) % size
            site_rates = state.rates[x]
            site_total = sum(site_rates)
        target = buf[j + 2] * site_total
        i = 0
        acc = site_rates[0]
        while acc <= target and i < n - 1:
            i += 1
            acc += site_rates[i]
        while site_rates[i] == 0:
            i -= 1
        y = (x + 1) % size if buf[j + 3] < p_right else (x - 1) % size
        state.move(x, y, i)
        for observer in event_observers:
            observer.jump(x, y, i, state)
        summary.events += 1
        since_rebuild += 1
        if since_rebuild >= TREE_REBUILD_EVENTS:
            since_rebuild = 0
            drift = state.rebuild_tree()
            summary.tree_drift = max(summary.tree_drift, drift)
            if drift > TREE_REBUILD_TOL:
                _logger.warning("Rate tree drifted by %.3g before rebuild", drift)

    state.time = t
    summary.micro_time = t
    summary.time = t / scale
    for observer in observers:
        observer.finish(summary.time, state)
    if summary.stopped_early:
        _logger.warning("Simulation stopped early: %s", summary.reason)
    return summary


@dataclass
class CanonicalGenerator:
    """Generator of the process with fixed species totals on a small lattice."""

    states: List[Tuple[Occupancy, ...]]
    Q: sparse.csr_matrix  # pylint: disable=invalid-name
    S: sparse.csr_matrix  # pylint: disable=invalid-name
    nu: np.ndarray
    geometry: str
    index: Dict[Tuple[Occupancy, ...], int] = field(repr=False, default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.states)


def count_canonical_states(N: int, totals: Sequence[int]) -> int:  # noqa: N803
    """Return the number of configurations with the given species totals."""
    count = 1
    for m in totals:
        count *= int(special.comb(int(m) + N - 1, N - 1, exact=True))
    return count


def _site_occupancies(
    config: Sequence[Tuple[int, ...]], n_sites: int
) -> List[Occupancy]:
    return [tuple(species[x] for species in config) for x in range(n_sites)]


def canonical_generator(
    family: RateFamily,
    N: int,  # noqa: N803 pylint: disable=invalid-name
    totals: Sequence[int],
    p_right: float = 0.5,
    geometry: str = "torus",
) -> CanonicalGenerator:
    """Enumerate the canonical state space and build its generator.

    Returns the full generator ``Q`` with jump probabilities ``p_right``
    and ``1 - p_right``, its symmetric part ``S`` with ``1/2`` each way and
    the product weights ``prod_x 1/g!(alpha(x))`` conditioned on the totals.
    """
    if geometry not in ("torus", "interval"):
        raise ValidationError(f"unknown geometry {geometry!r}")
    if len(totals) != family.n_species:
        raise ValidationError("totals must have one entry per species")
    count = count_canonical_states(N, totals)
    if count > MAX_CANONICAL_STATES:
        raise StateSpaceTooLarge(count, MAX_CANONICAL_STATES)
    per_species = [list(occupancies(N, int(m))) for m in totals]
    states = list(itertools.product(*per_species))
    index = {config: s for s, config in enumerate(states)}

    rows: List[int] = []
    cols: List[int] = []
    q_vals: List[float] = []
    s_vals: List[float] = []
    log_nu = np.empty(len(states))
    steps = ((1, p_right), (-1, 1 - p_right))
    for s, config in enumerate(states):
        sites = _site_occupancies(config, N)
        log_nu[s] = -sum(log_g_factorial(family, k) for k in sites)
        for x, k in enumerate(sites):
            rates = family.rates(k)
            for i, g in enumerate(rates):
                if g == 0:
                    continue
                for direction, prob in steps:
                    y = x + direction
                    if geometry == "torus":
                        y %= N
                    elif not 0 <= y < N:
                        continue
                    moved = list(config[i])
                    moved[x] -= 1
                    moved[y] += 1
                    target = config[:i] + (tuple(moved),) + config[i + 1 :]
                    rows.append(s)
                    cols.append(index[target])
                    q_vals.append(g * prob)
                    s_vals.append(g * 0.5)

    def assemble(values: List[float]) -> sparse.csr_matrix:
        size = len(states)
        off = sparse.coo_matrix((values, (rows, cols)), shape=(size, size)).tocsr()
        out_rate = np.asarray(off.sum(axis=1)).ravel()
        # self-loops (N=1) carry no net rate
        off.setdiag(off.diagonal() - out_rate)
        return off.tocsr()

    nu = np.exp(log_nu - np.max(log_nu))
    nu /= nu.sum()
    return CanonicalGenerator(
        states=states,
        Q=assemble(q_vals),
        S=assemble(s_vals),
        nu=nu,
        geometry=geometry,
        index=index,
    )


@dataclass(frozen=True)
class SpectralGap:
    """Spectral gap of the symmetric canonical process on ``2 ell + 1`` sites."""

    gap: float
    n_states: int
    ell: int
    totals: Tuple[int, ...]

    @property
    def inverse(self) -> float:
        """``W(k, ell) = 1 / gap``."""
        return math.inf if self.gap <= 0 else 1.0 / self.gap


def spectral_gap(family: RateFamily, totals: Sequence[int], ell: int) -> SpectralGap:
    """Return the spectral gap of the symmetric canonical process on an interval.

    The generator is reversible for the canonical weights ``nu``, so
    ``D^(1/2) S D^(-1/2)`` is symmetric and shares its spectrum.
    """
    if ell < 1:
        raise ValidationError("ell must be at least 1")
    if sum(totals) == 0:
        raise ValidationError("spectral gap undefined for an empty system (one state)")
    generator = canonical_generator(family, 2 * ell + 1, totals, geometry="interval")
    if generator.n_states < 2:
        raise ValidationError("spectral gap undefined for a single state")
    root = np.sqrt(generator.nu)
    sym = sparse.diags(root) @ generator.S @ sparse.diags(1 / root)
    sym = -(sym + sym.T) / 2
    if generator.n_states <= DENSE_EIGEN_LIMIT:
        eigenvalues = linalg.eigh(sym.toarray(), eigvals_only=True)
    else:
        eigenvalues = eigsh(
            sym.tocsc(), k=2, sigma=-1e-8, which="LM", return_eigenvectors=False
        )
    eigenvalues = np.sort(eigenvalues)
    if abs(eigenvalues[0]) > 1e-8 * max(1.0, abs(eigenvalues[-1])):
        raise NumericalError(
            f"lowest eigenvalue {eigenvalues[0]:.3g} is not zero; generator broken"
        )
    return SpectralGap(
        gap=float(eigenvalues[1]),
        n_states=generator.n_states,
        ell=ell,
        totals=tuple(int(m) for m in totals),
    )
