"""Multi-species jump-rate families.

A rate family assigns to every occupancy vector ``k`` of a site the jump
rates ``g_i(k)`` of its ``n`` species. Species are indexed from 0.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import (
    TYPE_CHECKING,
    Dict,
    Iterator,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import pandas as pd

from zrpfluct.constants import LOG_SPACE_THRESHOLD
from zrpfluct.errors import CapExceeded, DomainError, ValidationError

if TYPE_CHECKING:
    from zrpfluct.conditions import ConditionReport

_logger = logging.getLogger(__name__)

Occupancy = Tuple[int, ...]

FAMILY_KINDS = (
    "independent",
    "independent_factorial",
    "multi_color",
    "perturbed",
    "table",
)
SCALAR_KINDS = ("linear", "power", "h_perturbed", "table")
MAX_TABLE_DRAWS = 1000


def occupancies(n: int, total: int) -> Iterator[Occupancy]:
    """Yield every occupancy vector of ``n`` species with ``|k| = total``.

    >>> list(occupancies(2, 2))
    [(2, 0), (1, 1), (0, 2)]
    """
    if n == 1:
        yield (total,)
        return
    for bars in itertools.combinations(range(total + n - 1), n - 1):
        prev = -1
        k = []
        for bar in bars:
            k.append(bar - prev - 1)
            prev = bar
        k.append(total + n - 2 - prev)
        yield tuple(reversed(k))


def occupancies_upto(n: int, cap: int) -> Iterator[Occupancy]:
    """Yield every occupancy vector with ``|k| <= cap``, shell by shell."""
    for total in range(cap + 1):
        yield from occupancies(n, total)


def _as_occupancy(k: Sequence[int]) -> Occupancy:
    occ = tuple(int(v) for v in k)
    if any(v < 0 for v in occ):
        raise DomainError(f"occupancy with negative entry: {occ}")
    return occ


@dataclass(frozen=True, eq=False)
class ScalarRate:
    """Color-blind rate ``g: Z+ -> [0, inf)`` with ``g(0) = 0``."""

    kind: str = "linear"
    scale: float = 1.0
    exponent: float = 1.0
    values: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        """Validate the parameters."""
        if self.kind not in SCALAR_KINDS:
            raise ValidationError(f"unknown scalar rate kind {self.kind!r}")
        if self.kind in ("h_perturbed", "table") and not self.values:
            raise ValidationError(f"scalar rate {self.kind!r} needs values")
        if self.kind == "h_perturbed" and min(self.values) <= 0:
            raise ValidationError("h_perturbed weights must be positive")

    @property
    def cap(self) -> Optional[int]:
        """Largest tabulated count, None for closed forms."""
        if self.kind == "table":
            return len(self.values) - 1
        return None

    def _weight(self, m: int) -> float:
        return self.values[min(m, len(self.values) - 1)]

    def __call__(self, m: int) -> float:
        """Return g(m)."""
        if m <= 0:
            return 0.0
        if self.kind == "linear":
            return self.scale * m
        if self.kind == "power":
            return self.scale * float(m) ** self.exponent
        if self.kind == "h_perturbed":
            return m * self._weight(m - 1) / self._weight(m)
        if m >= len(self.values):
            raise CapExceeded((m,), len(self.values) - 1)
        return float(self.values[m])

    def describe(self) -> str:
        """Return a short human readable description."""
        if self.kind == "linear":
            return f"g(m)={self.scale:g}*m"
        if self.kind == "power":
            return f"g(m)={self.scale:g}*m^{self.exponent:g}"
        if self.kind == "h_perturbed":
            return "g(m)=m*H(m-1)/H(m), H=" + ",".join(f"{v:g}" for v in self.values)
        return f"tabulated g up to m={self.cap}"


def h_example_constant() -> float:
    """Return the tail weight making the three-level example balanced at φ=1.

    It is the smaller root of ``c**2 - c*(1/2 + e/4) + 1/16 = 0``.
    """
    b = 0.5 + math.e / 4
    return (b - math.sqrt(b * b - 0.25)) / 2


def h_example_rate() -> ScalarRate:
    """Return the rate built from ``H(0)=1/2, H(1)=1/4, H(k>=2)=c``."""
    return ScalarRate(kind="h_perturbed", values=(0.5, 0.25, h_example_constant()))


@dataclass(frozen=True, eq=False)
class RateFamily:
    """Jump rates ``g_i(k)`` of a multi-species zero-range process.

    Instances are immutable and hash by identity, so per-family caches are
    safe to share between threads.
    """

    n_species: int
    kind: str = "independent"
    cap: Optional[int] = None
    scalar: Optional[ScalarRate] = None
    base: Optional["RateFamily"] = None
    lam: Mapping[Occupancy, float] = field(default_factory=dict)
    table: Mapping[Occupancy, Tuple[float, ...]] = field(default_factory=dict)
    speeds: Tuple[float, ...] = ()
    label: str = ""

    def __post_init__(self) -> None:
        """Validate the family."""
        errors = []
        if self.n_species < 1:
            errors.append("n_species must be positive")
        if self.kind not in FAMILY_KINDS:
            errors.append(f"unknown family kind {self.kind!r}")
        if self.kind == "multi_color" and self.scalar is None:
            errors.append("multi_color family needs a scalar rate")
        if self.kind == "perturbed":
            if self.base is None:
                errors.append("perturbed family needs a base family")
            elif self.base.n_species != self.n_species:
                errors.append("perturbed base has a different species count")
            zero = (0,) * self.n_species
            if self.lam.get(zero, 1.0) != 1.0:
                errors.append("perturbation must satisfy lambda(0)=1")
            bad = [k for k, v in self.lam.items() if not v > 0]
            if bad:
                errors.append(f"perturbation must be positive, got {bad}")
        if self.kind == "table" and self.cap is None:
            errors.append("table family needs a cap")
        if self.speeds and len(self.speeds) != self.n_species:
            errors.append("speeds must have one entry per species")
        if errors:
            raise ValidationError("invalid rate family", errors)

    @property
    def effective_cap(self) -> Optional[int]:
        """Largest total occupancy the family can evaluate, None if unbounded."""
        caps = [c for c in (self.cap, self._inner_cap()) if c is not None]
        return min(caps) if caps else None

    def _inner_cap(self) -> Optional[int]:
        if self.kind == "multi_color" and self.scalar is not None:
            return self.scalar.cap
        if self.kind == "perturbed" and self.base is not None:
            return self.base.effective_cap
        return None

    def _speed(self, i: int) -> float:
        return self.speeds[i] if self.speeds else 1.0

    def _lambda(self, k: Occupancy) -> float:
        return self.lam.get(k, 1.0)

    @lru_cache(maxsize=None)
    def rates(self, k: Occupancy) -> Tuple[float, ...]:
        """Return ``(g_0(k), ..., g_{n-1}(k))`` for a validated occupancy."""
        cap = self.effective_cap
        if cap is not None and sum(k) > cap:
            raise CapExceeded(k, cap)
        n = self.n_species
        if self.kind == "independent":
            return tuple(self._speed(i) * k[i] for i in range(n))
        if self.kind == "independent_factorial":
            return tuple(
                self._speed(i) * float(math.factorial(k[i])) if k[i] else 0.0
                for i in range(n)
            )
        if self.kind == "multi_color":
            total = sum(k)
            if total == 0:
                return (0.0,) * n
            g_total = self.scalar(total)  # type: ignore
            return tuple(g_total * k[i] / total for i in range(n))
        if self.kind == "perturbed":
            base = self.base.rates(k)  # type: ignore
            lam_k = self._lambda(k)
            out = []
            for i in range(n):
                if k[i] == 0:
                    out.append(0.0)
                    continue
                down = k[:i] + (k[i] - 1,) + k[i + 1 :]
                out.append(base[i] * self._lambda(down) / lam_k)
            return tuple(out)
        values = self.table.get(k)
        if values is None:
            if sum(k) == 0:
                return (0.0,) * n
            raise CapExceeded(k, self.cap or 0)
        return tuple(float(v) if k[i] else 0.0 for i, v in enumerate(values))

    @lru_cache(maxsize=None)
    def _log_g_factorial(self, k: Occupancy) -> float:
        # walk down the canonical path: the last step added a particle of
        # the highest-index occupied species
        acc = 0.0
        current = k
        while any(current):
            j = max(i for i, v in enumerate(current) if v)
            g = self.rates(current)[j]
            if g <= 0:
                raise DomainError(f"zero rate on the canonical path at {current}")
            acc += math.log(g)
            current = current[:j] + (current[j] - 1,) + current[j + 1 :]
        return acc

    def describe(self) -> str:
        """Return a short human readable description."""
        if self.label:
            return self.label
        if self.kind == "multi_color":
            return f"multi_color[{self.scalar.describe()}]"  # type: ignore
        if self.kind == "perturbed":
            return f"perturbed[{self.base.describe()}]"  # type: ignore
        return f"{self.kind}(n={self.n_species})"


def independent(n: int, speeds: Sequence[float] = ()) -> RateFamily:
    """Return independent walkers, ``g_i(k) = k_i``."""
    return RateFamily(n_species=n, kind="independent", speeds=tuple(speeds))


def multi_color(n: int, g: ScalarRate) -> RateFamily:
    """Return the colored family ``g_i(k) = g(|k|) k_i / |k|``."""
    return RateFamily(n_species=n, kind="multi_color", scalar=g)


def perturbed(base: RateFamily, lam: Mapping[Sequence[int], float]) -> RateFamily:
    """Return ``g_i(k) lambda(k_{i,-}) / lambda(k)`` on top of ``base``."""
    table = {_as_occupancy(k): float(v) for k, v in lam.items()}
    return RateFamily(n_species=base.n_species, kind="perturbed", base=base, lam=table)


def perturbed_walks(x: float, y: float) -> RateFamily:
    """Return two independent walk species with ``lambda(1,0)=1+x, lambda(0,1)=1+y``."""
    if x <= -1 or y <= -1:
        raise ValidationError("perturbation needs x > -1 and y > -1")
    return RateFamily(
        n_species=2,
        kind="perturbed",
        base=independent(2),
        lam={(1, 0): 1 + x, (0, 1): 1 + y},
        label=f"perturbed_walks(x={x:g}, y={y:g})",
    )


def tabulate(family: RateFamily, cap: int, label: str = "") -> RateFamily:
    """Freeze ``family`` into an explicit table for ``|k| <= cap``."""
    table = {
        k: rate_vector(family, k) for k in occupancies_upto(family.n_species, cap)
    }
    return RateFamily(
        n_species=family.n_species,
        kind="table",
        cap=cap,
        table=table,
        label=label or f"table[{family.describe()}]",
    )


def with_entry(
    family: RateFamily, i: int, k: Sequence[int], value: float
) -> RateFamily:
    """Return a copy of a table family with ``g_i(k)`` replaced."""
    if family.kind != "table":
        raise ValidationError("only table families can be edited")
    occ = _as_occupancy(k)
    table = dict(family.table)
    row = list(table[occ])
    row[i] = value
    table[occ] = tuple(row)
    return RateFamily(
        n_species=family.n_species, kind="table", cap=family.cap, table=table
    )


def random_table_family(
    cap: int, rng: np.random.Generator, phi1: Optional[float] = None
) -> Tuple[RateFamily, Tuple[float, float]]:
    """Draw a tabulated two-species family with a known frame solution.

    The family is a perturbed pair of walks whose perturbation ``(x, y)``
    is drawn so that the frame system has a solution on ``phi1 + phi2 = 1``.
    Returns the table and the fugacity of that solution.
    """
    if phi1 is not None and not 0 < phi1 < 1:
        raise ValidationError(f"phi1 must lie in (0, 1), got {phi1}")
    for _ in range(MAX_TABLE_DRAWS):
        p1 = float(rng.uniform(0.3, 0.7)) if phi1 is None else phi1
        x = float(rng.uniform(0.5, 4.0))
        y = x * (p1 - 1) / (p1 + x / math.e)
        if y > -0.9:
            break
    else:
        raise ValidationError(
            f"no perturbation with y > -0.9 found for phi1={phi1} "
            f"in {MAX_TABLE_DRAWS} draws"
        )
    family = tabulate(
        perturbed_walks(x, y), cap, label=f"random_table(x={x:.6g}, y={y:.6g})"
    )
    return family, (p1, 1 - p1)


def load_table_family(path: str, n: int) -> RateFamily:
    """Read a table family from CSV columns ``k1..kn,g1..gn``."""
    try:
        frame = pd.read_csv(path, comment="#")
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    if len(frame.columns) != 2 * n:
        raise ValidationError(
            f"{path}: expected {2 * n} columns for n={n}, got {len(frame.columns)}"
        )
    occupancy = frame.iloc[:, :n].to_numpy(dtype=np.int64)
    g_values = frame.iloc[:, n:].to_numpy(dtype=float)
    table: Dict[Occupancy, Tuple[float, ...]] = {
        _as_occupancy(k.tolist()): tuple(g.tolist())
        for k, g in zip(occupancy, g_values)
    }
    if not table:
        raise ValidationError(f"{path}: empty rate table")
    cap = max(sum(k) for k in table)
    missing = [k for k in occupancies_upto(n, cap) if k not in table and any(k)]
    if missing:
        raise ValidationError(
            f"{path}: table incomplete below cap {cap}", [str(k) for k in missing[:10]]
        )
    return RateFamily(n_species=n, kind="table", cap=cap, table=table)


def rate_vector(family: RateFamily, k: Sequence[int]) -> Tuple[float, ...]:
    """Return all species rates at ``k``."""
    occ = _as_occupancy(k)
    if len(occ) != family.n_species:
        raise ValidationError(
            f"occupancy {occ} does not have {family.n_species} species"
        )
    return family.rates(occ)


def rate(family: RateFamily, i: int, k: Sequence[int]) -> float:
    """Return ``g_i(k)``; exactly 0 when ``k_i = 0``.

    >>> rate(independent(2), 0, (3, 2))
    3.0
    """
    if not 0 <= i < family.n_species:
        raise ValidationError(f"species index {i} out of range")
    return rate_vector(family, k)[i]


def log_g_factorial(family: RateFamily, k: Sequence[int]) -> float:
    """Return ``log g!(k)`` along the canonical increasing path."""
    occ = _as_occupancy(k)
    if len(occ) != family.n_species:
        raise ValidationError(f"occupancy {occ} has the wrong species count")
    return family._log_g_factorial(occ)


def g_factorial(family: RateFamily, k: Sequence[int]) -> float:
    """Return ``g!(k)``, the rate product along the canonical path.

    The canonical path fills species 0 first, then 1, and so on.

    >>> g_factorial(multi_color(2, ScalarRate()), (2, 1))
    2.0
    """
    occ = _as_occupancy(k)
    if sum(occ) > LOG_SPACE_THRESHOLD:
        return math.exp(log_g_factorial(family, occ))
    product = 1.0
    current = [0] * len(occ)
    for j, count in enumerate(occ):
        for _ in range(count):
            current[j] += 1
            product *= rate_vector(family, current)[j]
    return product


def path_log_product(family: RateFamily, path: Sequence[int]) -> float:
    """Return the log rate product along the path adding species ``path[m]``."""
    current = [0] * family.n_species
    acc = 0.0
    for j in path:
        current[j] += 1
        g = rate_vector(family, current)[j]
        if g <= 0:
            return -math.inf
        acc += math.log(g)
    return acc


def check_path_independence(
    family: RateFamily, k: Sequence[int], trials: int, rng: np.random.Generator
) -> float:
    """Return the largest relative deviation of random increasing paths.

    Each trial adds the particles of ``k`` in a uniformly random order and
    compares the rate product with the canonical one.
    """
    occ = _as_occupancy(k)
    canonical = log_g_factorial(family, occ)
    labels = np.repeat(np.arange(family.n_species), occ)
    worst = 0.0
    for _ in range(trials):
        path = rng.permutation(labels)
        value = path_log_product(family, [int(j) for j in path])
        worst = max(worst, abs(math.expm1(value - canonical)))
    return worst


def check_conditions(
    family: RateFamily,
    cap: int,
    m0: Optional[Sequence[int]] = None,
    eps0: float = 0.0,
    enable: Sequence[str] = (),
    skip: Sequence[str] = (),
) -> "ConditionReport":
    """Run every registered rate condition over ``|k| <= cap``."""
    # pylint: disable=import-outside-toplevel
    from zrpfluct.conditions import CheckContext, ConditionsCollection

    if cap < 2:
        raise ValidationError("condition checks need cap >= 2")
    effective = family.effective_cap
    if effective is not None and cap > effective:
        _logger.warning(
            "Condition cap %s lowered to the family cap %s", cap, effective
        )
        cap = effective
    ctx = CheckContext(
        cap=cap,
        m0=tuple(m0) if m0 is not None else (1,) * family.n_species,
        eps0=eps0,
    )
    collection = ConditionsCollection(enable_list=list(enable))
    return collection.run(family, ctx, skip)
