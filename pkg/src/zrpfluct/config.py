"""Store configuration options as a singleton and the experiment config."""
import dataclasses
import hashlib
import json
import logging
import os
from argparse import Namespace
from dataclasses import dataclass, field
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import yaml

from zrpfluct.constants import (
    DEFAULT_FRAME_TOL,
    DEFAULT_GRID_SIZE,
    DEFAULT_SPDE_DT,
    DEFAULT_SPDE_MODES,
    MIN_GRID_SIZE,
    OUTPUT_DIR_ENVVAR,
)
from zrpfluct.errors import ValidationError
from zrpfluct.kmc import SimParams, replica_rng
from zrpfluct.rates import (
    RateFamily,
    ScalarRate,
    h_example_rate,
    independent,
    load_table_family,
    multi_color,
    perturbed,
    perturbed_walks,
    random_table_family,
    tabulate,
)

_logger = logging.getLogger(__name__)

options = Namespace(
    colored=True,
    configured=False,
    config_file=None,
    command=None,
    action=None,
    cwd=".",
    enable=[],
    experiment={},
    listconditions=False,
    listtags=False,
    output_dir=None,
    profile=False,
    quiet=0,
    settings=[],
    skip=[],
    verbosity=0,
    workers=None,
)

CONFIG_FAMILY_KINDS = (
    "independent",
    "independent_factorial",
    "multi_color",
    "perturbed",
    "perturbed_walks",
    "table",
    "random_table",
)
CONFIG_SCALAR_KINDS = ("linear", "power", "h_perturbed", "h_example", "table")
OBSERVABLES = ("rate", "falling_square", "count", "zero")

Parser = Callable[[Any], Any]


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "on", "1"):
        return True
    if text in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError(f"not an integer: {value!r}")
    number = float(value)
    if not number.is_integer():
        raise ValueError(f"not an integer: {value!r}")
    return int(number)


def _parse_sequence(item: Parser) -> Parser:
    def parse(value: Any) -> Tuple[Any, ...]:
        if value is None:
            return ()
        if isinstance(value, str):
            parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
            return tuple(item(p.strip()) for p in parts)
        if isinstance(value, (list, tuple)):
            return tuple(item(v) for v in value)
        return (item(value),)

    return parse


def _parse_optional(item: Parser) -> Parser:
    def parse(value: Any) -> Any:
        if value is None or (isinstance(value, str) and value.strip() in ("", "none")):
            return None
        return item(value)

    return parse


def _parse_lambda(value: Any) -> Tuple[Tuple[Tuple[int, ...], float], ...]:
    """Parse ``{"1,0": 4}`` or ``"1,0=4; 0,1=0.5"`` into sorted pairs."""
    if isinstance(value, Mapping):
        items = list(value.items())
    elif isinstance(value, str):
        items = []
        for entry in value.split(";"):
            if not entry.strip():
                continue
            key, sep, number = entry.partition("=")
            if not sep:
                raise ValueError(f"expected 'k=value' entries, got {entry!r}")
            items.append((key, number))
    else:
        raise ValueError(f"not a perturbation mapping: {value!r}")
    pairs = []
    for key, number in items:
        if isinstance(key, str):
            occ = tuple(int(v) for v in key.strip("() ").split(","))
        else:
            occ = tuple(int(v) for v in key)
        pairs.append((occ, float(number)))
    return tuple(sorted(pairs))


_floats = _parse_sequence(float)
_ints = _parse_sequence(_parse_int)
_strings = _parse_sequence(str)


def _parser_for(spec_field: "dataclasses.Field[Any]") -> Parser:
    if "parse" in spec_field.metadata:
        return spec_field.metadata["parse"]  # type: ignore
    default = spec_field.default
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return _parse_int
    if isinstance(default, float):
        return float
    return str


def _key(spec_field: "dataclasses.Field[Any]") -> str:
    return spec_field.metadata.get("key", spec_field.name)  # type: ignore


def _jsonable(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


@dataclass(frozen=True)
class FamilySpec:
    """Rate family section, ``family.*``."""

    kind: str = "independent"
    n_species: int = 2
    g: str = "linear"
    scale: float = 1.0
    exponent: float = 1.0
    h: Tuple[float, ...] = field(default=(), metadata={"parse": _floats})
    speeds: Tuple[float, ...] = field(default=(), metadata={"parse": _floats})
    base: str = "independent"
    lam: Tuple[Tuple[Tuple[int, ...], float], ...] = field(
        default=(), metadata={"parse": _parse_lambda, "key": "lambda"}
    )
    x: float = 0.0
    y: float = 0.0
    phi1: Optional[float] = field(
        default=None, metadata={"parse": _parse_optional(float)}
    )
    table: str = ""
    cap: Optional[int] = field(
        default=None, metadata={"parse": _parse_optional(_parse_int)}
    )

    def validate(self) -> List[str]:
        violations = []
        if self.kind not in CONFIG_FAMILY_KINDS:
            violations.append(
                f"family.kind={self.kind!r} not one of {', '.join(CONFIG_FAMILY_KINDS)}"
            )
        if self.n_species < 1:
            violations.append("family.n_species must be positive")
        if self.kind in ("perturbed_walks", "random_table") and self.n_species != 2:
            violations.append(f"family.kind={self.kind} needs family.n_species=2")
        if self.g not in CONFIG_SCALAR_KINDS:
            violations.append(
                f"family.g={self.g!r} not one of {', '.join(CONFIG_SCALAR_KINDS)}"
            )
        colored = self.kind == "multi_color" or (
            self.kind == "perturbed" and self.base == "multi_color"
        )
        if colored and self.g in ("h_perturbed", "table") and not self.h:
            violations.append(f"family.g={self.g} needs family.h values")
        if self.kind == "table" and not self.table:
            violations.append("family.kind=table needs a family.table CSV path")
        if self.kind == "perturbed" and self.base not in (
            "independent",
            "independent_factorial",
            "multi_color",
        ):
            violations.append(f"family.base={self.base!r} cannot be perturbed")
        if self.kind == "perturbed_walks" and (self.x <= -1 or self.y <= -1):
            violations.append("family.x and family.y must exceed -1")
        if self.speeds and len(self.speeds) != self.n_species:
            violations.append("family.speeds needs one entry per species")
        if self.cap is not None and self.cap < 1:
            violations.append("family.cap must be positive")
        return violations

    def scalar_rate(self) -> ScalarRate:
        if self.g == "h_example":
            return h_example_rate()
        if self.g in ("h_perturbed", "table"):
            return ScalarRate(kind=self.g, values=self.h)
        return ScalarRate(kind=self.g, scale=self.scale, exponent=self.exponent)

    def _plain(self, kind: str) -> RateFamily:
        if kind == "independent":
            return independent(self.n_species, self.speeds)
        if kind == "independent_factorial":
            return RateFamily(
                n_species=self.n_species,
                kind="independent_factorial",
                speeds=self.speeds,
            )
        return multi_color(self.n_species, self.scalar_rate())

    def build(self, seed: int = 0) -> RateFamily:
        """Return the rate family, tabulated up to ``cap`` when one is set."""
        if self.kind == "perturbed_walks":
            family = perturbed_walks(self.x, self.y)
        elif self.kind == "perturbed":
            family = perturbed(self._plain(self.base), dict(self.lam))
        elif self.kind == "table":
            return load_table_family(self.table, self.n_species)
        elif self.kind == "random_table":
            family, _ = random_table_family(
                self.cap or 8, replica_rng(seed, 0), self.phi1
            )
            return family
        else:
            family = self._plain(self.kind)
        if self.cap is not None:
            family = tabulate(family, self.cap)
        return family


@dataclass(frozen=True)
class DensitySpec:
    """Reference density section, ``density.*``."""

    a: Tuple[float, ...] = field(default=(), metadata={"parse": _floats})
    phi: Tuple[float, ...] = field(default=(), metadata={"parse": _floats})
    frame: bool = False
    tol: float = DEFAULT_FRAME_TOL

    def validate(self, n: int) -> List[str]:
        violations = []
        if self.a and self.phi:
            violations.append("density.a and density.phi are mutually exclusive")
        for name, values in (("density.a", self.a), ("density.phi", self.phi)):
            if values and len(values) != n:
                violations.append(f"{name} needs {n} entries, got {len(values)}")
            if values and min(values) <= 0:
                violations.append(f"{name} entries must be positive")
        if not self.tol > 0:
            violations.append("density.tol must be positive")
        return violations


@dataclass(frozen=True)
class SimSpec:
    """Particle simulation section, ``sim.*``."""

    N: int = 128  # pylint: disable=invalid-name
    gamma: float = 1.0
    c: float = 0.0
    T: float = 1.0  # pylint: disable=invalid-name
    records: int = 11
    record_times: Tuple[float, ...] = field(default=(), metadata={"parse": _floats})
    replicas: int = 1
    seed: int = 0

    def times(self) -> Tuple[float, ...]:
        if self.record_times:
            return self.record_times
        return tuple(float(t) for t in np.linspace(0.0, self.T, self.records))

    def params(self) -> SimParams:
        return SimParams(
            N=self.N,
            gamma=self.gamma,
            c=self.c,
            T=self.T,
            seed=self.seed,
            record_times=self.times(),
        )

    def validate(self) -> List[str]:
        violations = []
        if self.replicas < 1:
            violations.append("sim.replicas must be positive")
        if self.records < 1:
            violations.append("sim.records must be positive")
        if self.seed < 0:
            violations.append("sim.seed must be non-negative")
        if self.N >= 2 and self.gamma > 0 and self.T > 0:
            try:
                self.params()
            except ValidationError as exc:
                violations.extend(f"sim: {v}" for v in exc.violations)
        else:
            violations.append("sim.N >= 2, sim.gamma > 0 and sim.T > 0 are required")
        return violations


@dataclass(frozen=True)
class FieldsSpec:
    """Fluctuation field section, ``fields.*``."""

    modes: Tuple[int, ...] = field(default=(1,), metadata={"parse": _ints})
    eps: Tuple[float, ...] = field(default=(), metadata={"parse": _floats})
    frame: str = "fixed"
    decomposition: bool = True
    profile: bool = False
    profile_amplitude: float = 0.2
    profile_block: int = 1

    def validate(self, N: int) -> List[str]:  # noqa: N803
        violations = []
        if self.frame not in ("fixed", "traveling"):
            violations.append(f"fields.frame={self.frame!r} not fixed or traveling")
        bad = [k for k in self.modes if not 0 < k < N / 2]
        if bad:
            violations.append(f"fields.modes {bad} not resolvable on N={N}")
        coarse = [e for e in self.eps if e < 2 / N]
        if coarse:
            violations.append(f"fields.eps {coarse} below the lattice limit 2/N")
        if not 0 <= self.profile_amplitude < 1:
            violations.append("fields.profile_amplitude must lie in [0, 1)")
        if self.profile_block < 1:
            violations.append("fields.profile_block must be positive")
        return violations


@dataclass(frozen=True)
class SpdeSpec:
    """Spectral integrator section, ``spde.*``."""

    K: int = DEFAULT_SPDE_MODES  # pylint: disable=invalid-name
    dt: float = DEFAULT_SPDE_DT
    eps: Optional[float] = field(
        default=None, metadata={"parse": _parse_optional(float)}
    )
    T: float = 1.0  # pylint: disable=invalid-name
    paths: int = 1
    nonlinear: bool = False
    records: int = 11
    record_times: Tuple[float, ...] = field(default=(), metadata={"parse": _floats})

    def times(self) -> Tuple[float, ...]:
        if self.record_times:
            return self.record_times
        return tuple(float(t) for t in np.linspace(0.0, self.T, self.records))

    def validate(self) -> List[str]:
        violations = []
        if self.K < 4 or self.K % 2:
            violations.append("spde.K must be even and at least 4")
        if not self.dt > 0 or not self.T > 0:
            violations.append("spde.dt and spde.T must be positive")
        if self.paths < 1:
            violations.append("spde.paths must be positive")
        if self.eps is not None and self.K >= 4 and self.eps < 2 * np.pi / self.K:
            violations.append("spde.eps below the resolution 2 pi / K")
        if self.record_times and (
            min(self.record_times) < 0 or max(self.record_times) > self.T
        ):
            violations.append(f"spde.record_times must lie in [0, {self.T}]")
        return violations


@dataclass(frozen=True)
class CouplingSpec:
    """Coupling tensor section, ``coupling.*``."""

    c: Optional[float] = field(
        default=None, metadata={"parse": _parse_optional(float)}
    )
    grid_size: int = DEFAULT_GRID_SIZE
    cross_check: bool = True

    def validate(self) -> List[str]:
        if self.grid_size < MIN_GRID_SIZE:
            return [f"coupling.grid_size must be at least {MIN_GRID_SIZE}"]
        return []


@dataclass(frozen=True)
class EoeSpec:
    """Equivalence of ensembles section, ``eoe.*``."""

    ells: Tuple[int, ...] = field(default=(2, 4, 8), metadata={"parse": _ints})
    samples: int = 0
    order: int = 2
    observable: str = "rate"
    species: int = 0

    def validate(self, n: int) -> List[str]:
        violations = []
        if not self.ells or min(self.ells) < 1:
            violations.append("eoe.ells must be positive block sizes")
        if self.samples < 0:
            violations.append("eoe.samples must be non-negative")
        if self.order not in (1, 2):
            violations.append("eoe.order must be 1 or 2")
        if self.observable not in OBSERVABLES:
            violations.append(
                f"eoe.observable={self.observable!r} not one of "
                + ", ".join(OBSERVABLES)
            )
        if not 0 <= self.species < n:
            violations.append(f"eoe.species must lie in [0, {n})")
        return violations


@dataclass(frozen=True)
class BgSpec:
    """Boltzmann-Gibbs section, ``bg.*``."""

    ells: Tuple[int, ...] = field(default=(1, 2, 4, 8), metadata={"parse": _ints})
    replicas: int = 20
    order: int = 2
    mode: int = 1

    def validate(self, N: int) -> List[str]:  # noqa: N803
        violations = []
        if not self.ells or min(self.ells) < 1 or 2 * max(self.ells) + 1 > N:
            violations.append(f"bg.ells {list(self.ells)} do not fit on N={N}")
        if self.replicas < 2:
            violations.append("bg.replicas must be at least 2")
        if self.order not in (1, 2):
            violations.append("bg.order must be 1 or 2")
        if not 0 < self.mode < N / 2:
            violations.append(f"bg.mode {self.mode} not resolvable on N={N}")
        return violations


@dataclass(frozen=True)
class CompareSpec:
    """Run comparison section, ``compare.*``."""

    se_band: float = 4.0
    rel_tol: float = 0.05
    estimators: Tuple[str, ...] = field(default=("*",), metadata={"parse": _strings})

    def validate(self) -> List[str]:
        violations = []
        if not self.se_band > 0:
            violations.append("compare.se_band must be positive")
        if not self.rel_tol >= 0:
            violations.append("compare.rel_tol must be non-negative")
        if not self.estimators:
            violations.append("compare.estimators must not be empty")
        return violations


@dataclass(frozen=True)
class ConditionsSpec:
    """Rate condition section, ``conditions.*``."""

    cap: int = 8
    m0: Tuple[int, ...] = field(default=(), metadata={"parse": _ints})
    eps0: float = 0.0
    enable: Tuple[str, ...] = field(default=(), metadata={"parse": _strings})
    skip: Tuple[str, ...] = field(default=(), metadata={"parse": _strings})

    def validate(self, n: int) -> List[str]:
        violations = []
        if self.cap < 2:
            violations.append("conditions.cap must be at least 2")
        if self.m0 and len(self.m0) != n:
            violations.append(f"conditions.m0 needs {n} entries")
        return violations


@dataclass(frozen=True)
class OutputSpec:
    """Artifact section, ``output.*``."""

    dir: str = "zrpfluct-out"


SECTIONS = {
    "family": FamilySpec,
    "density": DensitySpec,
    "sim": SimSpec,
    "fields": FieldsSpec,
    "spde": SpdeSpec,
    "coupling": CouplingSpec,
    "eoe": EoeSpec,
    "bg": BgSpec,
    "compare": CompareSpec,
    "conditions": ConditionsSpec,
    "output": OutputSpec,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment configuration.

    Built from a flat mapping of dotted keys (``sim.N``) by ``from_mapping``,
    which reports every invalid key and value at once.
    """

    family: FamilySpec = field(default_factory=FamilySpec)
    density: DensitySpec = field(default_factory=DensitySpec)
    sim: SimSpec = field(default_factory=SimSpec)
    fields: FieldsSpec = field(default_factory=FieldsSpec)
    spde: SpdeSpec = field(default_factory=SpdeSpec)
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    eoe: EoeSpec = field(default_factory=EoeSpec)
    bg: BgSpec = field(default_factory=BgSpec)
    compare: CompareSpec = field(default_factory=CompareSpec)
    conditions: ConditionsSpec = field(default_factory=ConditionsSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    @classmethod
    def from_mapping(
        cls, mapping: Mapping[str, Any], check: bool = True
    ) -> "ExperimentConfig":
        """Parse dotted keys into sections, raising on any invalid entry."""
        violations: List[str] = []
        grouped: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
        for key, value in mapping.items():
            section, _, name = str(key).partition(".")
            if section not in SECTIONS or not name:
                violations.append(f"unknown configuration key {key!r}")
                continue
            grouped[section][name] = value
        sections = {}
        for section, spec_class in SECTIONS.items():
            known = {_key(f): f for f in dataclasses.fields(spec_class)}
            kwargs = {}
            for name, value in grouped[section].items():
                spec_field = known.get(name)
                if spec_field is None:
                    violations.append(f"unknown configuration key '{section}.{name}'")
                    continue
                try:
                    kwargs[spec_field.name] = _parser_for(spec_field)(value)
                except (TypeError, ValueError) as exc:
                    violations.append(f"{section}.{name}: {exc}")
            sections[section] = spec_class(**kwargs)
        if violations:
            raise ValidationError("invalid configuration", violations)
        config = cls(**sections)
        if check:
            violations = config.validate()
            if violations:
                raise ValidationError("invalid configuration", violations)
        return config

    def validate(self) -> List[str]:
        """Return every violated constraint of the configuration."""
        n = self.family.n_species
        N = self.sim.N  # pylint: disable=invalid-name
        violations = self.family.validate()
        violations += self.density.validate(n)
        violations += self.sim.validate()
        violations += self.fields.validate(N)
        violations += self.spde.validate()
        violations += self.coupling.validate()
        violations += self.eoe.validate(n)
        violations += self.bg.validate(N)
        violations += self.compare.validate()
        violations += self.conditions.validate(n)
        return violations

    def as_flat(self) -> Dict[str, Any]:
        """Return the resolved configuration as sorted dotted keys."""
        flat = {}
        for section in SECTIONS:
            spec = getattr(self, section)
            for spec_field in dataclasses.fields(spec):
                value = getattr(spec, spec_field.name)
                if spec_field.name == "lam":
                    value = {",".join(map(str, k)): v for k, v in value}
                flat[f"{section}.{_key(spec_field)}"] = _jsonable(value)
        return dict(sorted(flat.items()))

    def content_hash(self) -> str:
        """Return the SHA-256 of the canonical JSON of the resolved config."""
        payload = json.dumps(self.as_flat(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @property
    def coupling_c(self) -> float:
        return self.sim.c if self.coupling.c is None else self.coupling.c


def resolve_output_dir(cli_value: Optional[str], config: ExperimentConfig) -> str:
    """Return the output directory: CLI first, then environment, then config."""
    return cli_value or os.environ.get(OUTPUT_DIR_ENVVAR) or config.output.dir


def flatten(mapping: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Flatten nested sections into dotted keys.

    Values under ``family.lambda`` stay mappings.

    >>> flatten({"sim": {"N": 64}, "output.dir": "out"})
    {'sim.N': 64, 'output.dir': 'out'}
    """
    flat: Dict[str, Any] = {}
    for key, value in mapping.items():
        dotted = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, Mapping) and dotted != "family.lambda":
            flat.update(flatten(value, dotted))
        else:
            flat[dotted] = value
    return flat


def parse_settings(settings: Sequence[str]) -> Dict[str, Any]:
    """Parse ``key=value`` strings given with ``--set``."""
    parsed = {}
    for setting in settings:
        key, sep, value = setting.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"--set expects key=value, got {setting!r}")
        parsed[key.strip()] = yaml.safe_load(value) if value.strip() else None
    return parsed
