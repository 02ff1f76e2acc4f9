"""Application."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Tuple, Type

import numpy as np

from zrpfluct import formatters
from zrpfluct.artifacts import ArtifactWriter
from zrpfluct.color import console
from zrpfluct.compare import (
    ESTIMATOR_COLUMNS,
    ComparisonReport,
    compare_runs,
    field_estimators,
    qv_estimators,
)
from zrpfluct.config import ExperimentConfig, resolve_output_dir
from zrpfluct.constants import (
    ACCEPTANCE_FAILURE_RC,
    NUMERICAL_FAILURE_RC,
    SUCCESS_RC,
)
from zrpfluct.coupling import (
    CouplingTensor,
    build_tensor,
    decouple_scan,
    multicolor_constants,
)
from zrpfluct.ensemble import (
    DensityPoint,
    fugacity_of_density,
    grad_tilde_g,
    hess_tilde_g,
    point_of_fugacity,
)
from zrpfluct.errors import FrameConditionError, ValidationError
from zrpfluct.fields import (
    DecompositionObserver,
    FieldObserver,
    FieldSeries,
    MollifiedObserver,
    cauchy_differences,
    fourier_cos,
    fourier_pairs,
    hydrodynamic_profile,
    structure_factor,
)
from zrpfluct.frame import FrameCertificate, check_frame, solve_frame
from zrpfluct.kmc import Observer, replica_rng
from zrpfluct.logger import timed_info
from zrpfluct.rates import RateFamily, check_conditions
from zrpfluct.runner import ReplicaRunner
from zrpfluct.spde import (
    build_model,
    decoupled_driver_covariance,
    ou_correlation,
    run_spde,
    white_noise,
)
from zrpfluct.stats import (
    LocalObservable,
    bg_diagnostic,
    decay_slope,
    eoe_check,
    falling_square,
    rate_observable,
    species_count,
    zero_observable,
)

if TYPE_CHECKING:
    from argparse import Namespace

    from zrpfluct.conditions import ConditionReport


_logger = logging.getLogger(__package__)

FIELD_COLUMNS = ("replica", "t", "field", "species", "mode", "value")


@dataclass
class ExperimentResult:
    """Exit status, artifact directory and the objects worth reporting."""

    status: int
    directory: Path
    certificate: Optional[FrameCertificate] = None
    conditions: Optional["ConditionReport"] = None
    comparison: Optional[ComparisonReport] = None
    artifacts: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


@dataclass
class _Run:
    config: ExperimentConfig
    writer: ArtifactWriter
    workers: Optional[int]
    result: ExperimentResult
    run_dirs: Tuple[str, ...] = ()
    _family: Optional[RateFamily] = None

    @property
    def family(self) -> RateFamily:
        if self._family is None:
            self._family = self.config.family.build(self.config.sim.seed)
        return self._family


def resolve_point(run: _Run) -> DensityPoint:
    """Return the reference density, solving the frame system if asked to."""
    density = run.config.density
    if density.phi:
        point = point_of_fugacity(run.family, density.phi)
    elif density.a:
        point = fugacity_of_density(run.family, density.a)
    else:
        raise ValidationError("density.a or density.phi must be set")
    if density.frame:
        certificate = solve_frame(run.family, point.a, density.tol)
        run.result.certificate = certificate
        if not certificate.holds or certificate.point is None:
            _abort_without_frame(run, certificate)
        point = certificate.point  # type: ignore
    return point


def _abort_without_frame(run: _Run, certificate: FrameCertificate) -> None:
    run.result.certificate = certificate
    run.writer.write_json("frame.json", "certificate", certificate.as_record())
    run.writer.finalize()
    raise FrameConditionError(
        f"frame condition fails at a0={certificate.a0.tolist()}: "
        f"offdiag residual {certificate.offdiag_residual:.3g}, "
        f"ratio residual {certificate.ratio_residual:.3g}",
        certificate,
    )


def guard_frame(run: _Run, point: DensityPoint) -> FrameCertificate:
    """Check the frame condition, aborting gamma=1/2 runs where it fails."""
    certificate = run.result.certificate or check_frame(point, run.config.density.tol)
    run.result.certificate = certificate
    if run.config.sim.gamma == 0.5 and not certificate.holds:
        _abort_without_frame(run, certificate)
    return certificate


def _frame_lam(run: _Run, certificate: FrameCertificate) -> float:
    if run.config.fields.frame == "traveling" and not certificate.holds:
        _logger.warning(
            "Traveling frame at a density without frame condition, "
            "using the mean speed %.6g",
            certificate.lam,
        )
    return certificate.lam


def _field_rows(series: List[FieldSeries]) -> List[Tuple[Any, ...]]:
    return [row for replica, s in enumerate(series) for row in s.rows(replica)]


def _write_structure_factors(
    run: _Run, series: List[FieldSeries], modes: Tuple[int, ...], name: str
) -> None:
    rows = []
    for k in modes:
        sf = structure_factor(series, k)
        n = sf.value.shape[-1]
        for a, t in enumerate(sf.times):
            for b, s in enumerate(sf.times):
                for i in range(n):
                    for j in range(n):
                        value = sf.value[a, b, i, j]
                        stderr = sf.stderr[a, b, i, j]
                        rows.append((k, t, s, i, j, value, stderr))
    run.writer.write_csv(
        name,
        "structure_factor",
        ("mode", "t", "s", "i", "j", "value", "stderr"),
        rows,
    )


def _simulate(run: _Run) -> None:
    config = run.config
    point = resolve_point(run)
    certificate = guard_frame(run, point)
    lam = _frame_lam(run, certificate)
    params = config.sim.params()
    tests = fourier_pairs(params.N, config.fields.modes)
    frame = config.fields.frame

    def observers() -> List[Observer]:
        return [FieldObserver(tests, point.a, frame, lam)]  # type: ignore

    results = ReplicaRunner(run.workers).simulate(
        point, params, observers, config.sim.replicas
    )
    series = [r.observers[0].series for r in results]  # type: ignore
    run.writer.write_csv("fields.csv", "fields", FIELD_COLUMNS, _field_rows(series))
    run.writer.write_csv(
        "estimators.csv",
        "estimators",
        ESTIMATOR_COLUMNS,
        field_estimators(series, config.fields.modes),
    )
    run.writer.write_json(
        "runs.json",
        "summary",
        {
            "point": point.as_record(),
            "frame": certificate.as_record(),
            "replicas": [
                {"replica": r.replica, **r.summary.__dict__} for r in results
            ],
        },
    )


def _run_fields(run: _Run) -> None:
    config = run.config
    point = resolve_point(run)
    certificate = guard_frame(run, point)
    lam = _frame_lam(run, certificate)
    params = config.sim.params()
    modes = config.fields.modes
    tests = fourier_pairs(params.N, modes)
    frame = config.fields.frame
    gamma_raw = np.stack([hess_tilde_g(point, i) for i in range(point.n_species)])
    eps_values = config.fields.eps
    decompose = config.fields.decomposition

    def observers() -> List[Observer]:
        attached: List[Observer] = [
            DecompositionObserver(tests, point, frame, lam)  # type: ignore
            if decompose
            else FieldObserver(tests, point.a, frame, lam)  # type: ignore
        ]
        if eps_values:
            attached.append(
                MollifiedObserver(
                    fourier_cos(params.N, modes[0]),
                    eps_values,
                    point.a,
                    gamma_raw,
                    frame,  # type: ignore
                    lam,
                )
            )
        return attached

    results = ReplicaRunner(run.workers).simulate(
        point, params, observers, config.sim.replicas
    )
    series = [r.observers[0].series for r in results]  # type: ignore
    if decompose:
        run.writer.write_csv(
            "decomposition.csv", "decomposition", FIELD_COLUMNS, _field_rows(series)
        )
    else:
        run.writer.write_csv("fields.csv", "fields", FIELD_COLUMNS, _field_rows(series))
    _write_structure_factors(run, series, modes, "structure_factor.csv")
    estimates = field_estimators(series, modes)
    if decompose:
        estimates += qv_estimators(series)
    run.writer.write_csv("estimators.csv", "estimators", ESTIMATOR_COLUMNS, estimates)

    grads = np.array([h.grad_norm2() for h in tests])
    summary: Dict[str, Any] = {
        "point": point.as_record(),
        "frame": certificate.as_record(),
        "grad_tilde_g": grad_tilde_g(point),
        "qv_limit": {
            h.label: (point.tilde_g * g2).tolist() for h, g2 in zip(tests, grads)
        },
    }
    if eps_values:
        mollified = [r.observers[1].series for r in results]  # type: ignore
        run.writer.write_csv(
            "mollified.csv", "mollified", FIELD_COLUMNS, _field_rows(mollified)
        )
        pairs = [cauchy_differences(s) for s in mollified]
        keys = list(pairs[0])
        means = [float(np.mean([p[key] for p in pairs])) for key in keys]
        summary["cauchy"] = [
            {"eps": list(key), "sup_difference": value}
            for key, value in zip(keys, means)
        ]
        summary["cauchy_monotone"] = all(a >= b for a, b in zip(means, means[1:]))
    if run.family.kind == "multi_color":
        labels, covariance = decoupled_driver_covariance(point.a)
        summary["decoupled_drivers"] = {"labels": labels, "covariance": covariance}
    if config.fields.profile:
        summary["profile"] = _write_profile(run, point)
    run.writer.write_json("fields.json", "summary", summary)


def _write_profile(run: _Run, point: DensityPoint) -> Dict[str, Any]:
    config = run.config
    amplitude = config.fields.profile_amplitude
    a0 = point.a

    def profile(u: float) -> np.ndarray:
        return a0 * (1 + amplitude * math.sin(2 * math.pi * u))

    params = config.sim.params()
    rng = replica_rng(params.seed, config.sim.replicas)
    with timed_info("Recorded a hydrodynamic profile of N=%d", params.N):
        times, profiles, summary = hydrodynamic_profile(
            run.family, profile, params, rng, config.fields.profile_block
        )
    rows = [
        (t, x, i, profiles[a, x, i])
        for a, t in enumerate(times)
        for x in range(params.N)
        for i in range(point.n_species)
    ]
    columns = ("t", "site", "species", "value")
    run.writer.write_csv("profile.csv", "profile", columns, rows)
    return summary.__dict__


def _dump_ensemble(run: _Run) -> None:
    point = resolve_point(run)
    record = point.as_record()
    record["grad_tilde_g"] = grad_tilde_g(point)
    record["kappa"] = point.kappa
    run.writer.write_json("ensemble.json", "ensemble", record)
    n = point.n_species
    table = point.table
    rows = [(*map(int, k), w) for k, w in zip(table.states, table.weights)]
    run.writer.write_csv(
        "marginal.csv", "marginal", [f"k{i}" for i in range(n)] + ["weight"], rows
    )


def _solve_frame(run: _Run) -> None:
    density = run.config.density
    if density.phi:
        start = point_of_fugacity(run.family, density.phi).a
    elif density.a:
        start = np.asarray(density.a, dtype=float)
    else:
        raise ValidationError("frame solve needs a starting density.a or density.phi")
    certificate = solve_frame(run.family, start, density.tol)
    run.result.certificate = certificate
    run.writer.write_json("frame.json", "certificate", certificate.as_record())
    if not certificate.holds:
        run.result.status = NUMERICAL_FAILURE_RC


def _tensor(run: _Run) -> CouplingTensor:
    point = resolve_point(run)
    tensor = build_tensor(
        point,
        run.config.coupling_c,
        run.config.density.tol,
        cross_check=run.config.coupling.cross_check,
    )
    run.result.certificate = tensor.certificate
    return tensor


def _build_coupling(run: _Run) -> None:
    tensor = _tensor(run)
    record = tensor.as_record()
    if run.family.kind == "multi_color" and run.family.scalar is not None:
        rho0 = float(np.sum(tensor.certificate.a0))  # type: ignore
        record["multicolor_constants"] = multicolor_constants(
            run.family.scalar, rho0, tensor.c
        )
    run.writer.write_json("coupling.json", "coupling", record)
    n = tensor.n
    rows = [
        (i, j, k, tensor.gamma_raw[i, j, k], tensor.gamma_norm[i, j, k])
        for i in range(n)
        for j in range(n)
        for k in range(n)
    ]
    run.writer.write_csv(
        "coupling.csv", "coupling", ("i", "j", "l", "gamma_raw", "gamma_norm"), rows
    )


def _scan_decoupling(run: _Run) -> None:
    tensor = _tensor(run)
    with timed_info("Scanned %d angles", run.config.coupling.grid_size):
        scan = decouple_scan(tensor, run.config.coupling.grid_size)
    run.writer.write_csv(
        "decouple.csv", "decouple", ("psi", "F", "G"), zip(scan.psi, scan.F, scan.G)
    )
    run.writer.write_json("decouple.json", "decouple", scan.as_record())
    run.result.summary = scan.as_record()


def _run_spde(run: _Run) -> None:
    config = run.config
    spec = config.spde
    point = resolve_point(run)
    c = config.coupling_c
    model = build_model(point, c)
    rng = replica_rng(config.sim.seed, 0)
    state = white_noise(model, rng, spec.K, spec.paths)
    tensor = _tensor(run) if spec.nonlinear else None
    frame_speed = 0.0
    if config.fields.frame == "traveling":
        frame_speed = 2 * c * check_frame(point, config.density.tol).lam
    with timed_info("Integrated %d paths with K=%d", spec.paths, spec.K):
        result = run_spde(
            state,
            spec.T,
            spec.dt,
            rng,
            config.fields.modes,
            spec.times(),
            tensor,
            spec.eps,
            frame_speed,
        )
    series = result.series
    run.writer.write_csv(
        "spde_fields.csv", "fields", FIELD_COLUMNS, _field_rows(series)
    )
    run.writer.write_csv(
        "estimators.csv",
        "estimators",
        ESTIMATOR_COLUMNS,
        field_estimators(series, config.fields.modes),
    )
    if tensor is None:
        times = series[0].times
        rows = [
            (k, t, s, i, j, ou_correlation(model, k, i, j, t - s, frame_speed))
            for k in config.fields.modes
            for t in times
            for s in times
            for i in range(model.n_species)
            for j in range(model.n_species)
        ]
        run.writer.write_csv(
            "ou_reference.csv",
            "reference",
            ("mode", "t", "s", "i", "j", "value"),
            rows,
        )
    run.writer.write_json(
        "spde.json",
        "summary",
        {"steps": result.steps, "t": result.state.t, "warnings": result.warnings},
    )


def select_observable(config: ExperimentConfig, family: RateFamily) -> LocalObservable:
    """Return the local observable named by ``eoe.observable``."""
    species = config.eoe.species
    name = config.eoe.observable
    if name == "rate":
        return rate_observable(family, species)
    if name == "falling_square":
        return falling_square(species)
    if name == "count":
        return species_count(species)
    return zero_observable()


def _diagnose_eoe(run: _Run) -> None:
    config = run.config
    point = resolve_point(run)
    observable = select_observable(config, run.family)
    rng = replica_rng(config.sim.seed, 0)
    with timed_info("Compared ensembles at %d block sizes", len(config.eoe.ells)):
        comparisons = eoe_check(
            point,
            observable,
            config.eoe.ells,
            config.eoe.samples,
            rng,
            config.eoe.order,
        )
    rows = [c.as_row() for c in comparisons]
    columns = list(rows[0])
    run.writer.write_csv("eoe.csv", "eoe", columns, [list(r.values()) for r in rows])
    errors = [c.l4_error for c in comparisons]
    summary: Dict[str, Any] = {
        "observable": observable.name,
        "order": config.eoe.order,
        "warnings": [w for c in comparisons for w in c.warnings],
    }
    if len(errors) > 1 and min(errors) > 0:
        summary["slope"] = decay_slope([c.ell for c in comparisons], errors)
    run.writer.write_json("eoe.json", "summary", summary)
    run.result.summary = summary


def _diagnose_bg(run: _Run) -> None:
    config = run.config
    point = resolve_point(run)
    certificate = guard_frame(run, point)
    params = config.sim.params()
    lam = certificate.lam if config.fields.frame == "traveling" else 0.0
    diagnostic = bg_diagnostic(
        point,
        select_observable(config, run.family),
        params,
        config.bg.ells,
        config.bg.replicas,
        H=fourier_cos(params.N, config.bg.mode),
        order=config.bg.order,
        lam=lam,
        workers=run.workers,
    )
    rows = [
        (r.ell, r.N, r.estimate, r.stderr, r.bound_shape, r.replicas)
        for r in diagnostic.rows
    ]
    run.writer.write_csv(
        "bg.csv",
        "bg",
        ("ell", "N", "estimate", "stderr", "bound_shape", "replicas"),
        rows,
    )
    summary = {
        "observable": diagnostic.observable,
        "order": diagnostic.order,
        "interior_minimum": diagnostic.interior_minimum(),
    }
    run.writer.write_json("bg.json", "summary", summary)
    run.result.summary = summary


def _check_conditions(run: _Run) -> None:
    spec = run.config.conditions
    report = check_conditions(
        run.family, spec.cap, spec.m0 or None, spec.eps0, spec.enable, spec.skip
    )
    run.result.conditions = report
    record = {
        cid: {
            "holds": result.holds,
            "cap": result.cap,
            "value": result.value,
            "violations": [repr(v) for v in result.violations],
            "warnings": result.warnings,
        }
        for cid, result in sorted(report.results.items())
    }
    run.writer.write_json("conditions.json", "conditions", record)


def _compare(run: _Run) -> None:
    if len(run.run_dirs) != 2:
        raise ValidationError("compare needs two run directories")
    report = compare_runs(run.run_dirs[0], run.run_dirs[1], run.config.compare)
    run.result.comparison = report
    run.writer.write_csv(
        "comparison.csv",
        "comparison",
        ("estimator", "a", "b", "stderr", "z", "rel", "passed"),
        [
            (r.estimator, r.a, r.b, r.stderr, r.z, r.rel, int(r.passed))
            for r in report.rows
        ],
    )
    run.writer.write_json("comparison.json", "comparison", report.as_record())
    if not report.passed:
        run.result.status = ACCEPTANCE_FAILURE_RC


COMMANDS: Dict[str, Callable[[_Run], None]] = {
    "simulate": _simulate,
    "fields": _run_fields,
    "ensemble dump": _dump_ensemble,
    "frame solve": _solve_frame,
    "coupling build": _build_coupling,
    "decouple scan": _scan_decoupling,
    "spde run": _run_spde,
    "diagnose eoe": _diagnose_eoe,
    "diagnose bg": _diagnose_bg,
    "conditions": _check_conditions,
    "compare": _compare,
}


def run_experiment(
    config: ExperimentConfig,
    command: str,
    output_dir: Optional[str] = None,
    workers: Optional[int] = None,
    run_dirs: Tuple[str, ...] = (),
) -> ExperimentResult:
    """Execute one subcommand and write its artifacts and manifest.

    ``command`` is the subcommand with its action, e.g. ``"frame solve"``.
    """
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    directory = Path(resolve_output_dir(output_dir, config))
    writer = ArtifactWriter(directory, config)
    result = ExperimentResult(status=SUCCESS_RC, directory=directory)
    run = _Run(
        config=config,
        writer=writer,
        workers=workers,
        result=result,
        run_dirs=tuple(run_dirs),
    )
    _logger.info("Running %s, config %s", command, writer.config_hash[:12])
    COMMANDS[command](run)
    writer.finalize()
    result.artifacts = [directory / e.path for e in writer.entries]
    return result


class App:
    """App class represents one invocation of the command line."""

    def __init__(self, options: "Namespace"):
        """Construct app run based on already loaded configuration."""
        self.options = options
        formatter_factory = choose_formatter_factory(options)
        self.formatter = formatter_factory(options.cwd)

    @property
    def command(self) -> str:
        if self.options.action:
            return f"{self.options.command} {self.options.action}"
        return str(self.options.command)

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        """Run the selected subcommand and render its outcome."""
        run_dirs = ()
        if self.options.command == "compare":
            run_dirs = (self.options.run_a, self.options.run_b)
        result = run_experiment(
            config,
            self.command,
            output_dir=self.options.output_dir,
            workers=self.options.workers,
            run_dirs=run_dirs,
        )
        self.render(result)
        return result

    def _print(self, text: str) -> None:
        if text:
            # highlight must be off or apostrophes may produce unexpected results
            console.print(text, highlight=False)

    def render(self, result: ExperimentResult) -> None:
        """Display certificates, condition reports and comparisons."""
        if result.certificate is not None:
            self._print(self.formatter.format_certificate(result.certificate))
        if result.conditions is not None:
            for condition in result.conditions.results.values():
                self._print(self.formatter.format_condition(condition))
            for violation in result.conditions.violations:
                self._print(self.formatter.format(violation))
        if result.comparison is not None:
            rows = result.comparison.rows
            if not result.comparison.passed:
                _logger.warning(
                    "%d of %d estimators outside tolerance",
                    len(result.comparison.failures),
                    len(rows),
                )
            for row in rows:
                self._print(self.formatter.format_comparison(row))
        for path in result.artifacts:
            self._print(self.formatter.format_artifact(path))


def choose_formatter_factory(
    options_list: "Namespace",
) -> Type[formatters.BaseFormatter[Any]]:
    """Select an output formatter based on the incoming command line arguments."""
    r: Type[formatters.BaseFormatter[Any]] = formatters.Formatter
    if options_list.quiet:
        r = formatters.QuietFormatter
    return r
