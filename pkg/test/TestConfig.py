"""Tests for the experiment configuration."""
import pytest

from zrpfluct.config import (
    ExperimentConfig,
    FamilySpec,
    flatten,
    parse_settings,
    resolve_output_dir,
)
from zrpfluct.constants import OUTPUT_DIR_ENVVAR
from zrpfluct.errors import ValidationError


def test_defaults_are_valid() -> None:
    config = ExperimentConfig.from_mapping({})
    assert config.validate() == []
    assert config.sim.N == 128
    assert config.coupling_c == config.sim.c


def test_string_values_are_parsed() -> None:
    config = ExperimentConfig.from_mapping(
        {
            "sim.N": "64",
            "sim.c": "0.5",
            "fields.modes": "1, 2",
            "fields.decomposition": "no",
            "density.phi": [0.5, 0.5],
            "family.lambda": "1,0=4; 0,1=0.5",
            "coupling.c": "none",
        }
    )
    assert config.sim.N == 64
    assert config.fields.modes == (1, 2)
    assert config.fields.decomposition is False
    assert config.density.phi == (0.5, 0.5)
    assert config.family.lam == (((0, 1), 0.5), ((1, 0), 4.0))
    assert config.coupling.c is None


def test_every_violation_is_reported() -> None:
    with pytest.raises(ValidationError) as excinfo:
        ExperimentConfig.from_mapping(
            {
                "sim.N": "many",
                "sims.N": 3,
                "sim.colour": 1,
                "family.n_species": "1.5",
            }
        )
    violations = excinfo.value.violations
    assert len(violations) == 4
    assert "unknown configuration key 'sims.N'" in violations
    assert "unknown configuration key 'sim.colour'" in violations
    assert excinfo.value.exit_code == 2


def test_constraints_are_collected() -> None:
    with pytest.raises(ValidationError) as excinfo:
        ExperimentConfig.from_mapping(
            {
                "family.kind": "perturbed_walks",
                "family.n_species": 3,
                "density.a": [1.0, 2.0],
                "density.phi": [1.0, 1.0, 1.0],
                "fields.modes": [64],
                "bg.replicas": 1,
                "eoe.order": 3,
            }
        )
    violations = excinfo.value.violations
    assert "family.kind=perturbed_walks needs family.n_species=2" in violations
    assert "density.a and density.phi are mutually exclusive" in violations
    assert "density.a needs 3 entries, got 2" in violations
    assert "fields.modes [64] not resolvable on N=128" in violations
    assert "bg.replicas must be at least 2" in violations
    assert "eoe.order must be 1 or 2" in violations


def test_unchecked_config_skips_constraints() -> None:
    config = ExperimentConfig.from_mapping({"bg.replicas": 1}, check=False)
    assert config.validate() == ["bg.replicas must be at least 2"]


def test_as_flat_round_trip() -> None:
    config = ExperimentConfig.from_mapping(
        {"sim.N": 32, "family.kind": "perturbed", "family.lambda": {"1,0": 4}}
    )
    flat = config.as_flat()
    assert list(flat) == sorted(flat)
    assert flat["family.lambda"] == {"1,0": 4.0}
    assert flat["sim.record_times"] == []
    assert ExperimentConfig.from_mapping(flat) == config


def test_content_hash() -> None:
    config = ExperimentConfig.from_mapping({"sim.N": 32})
    same = ExperimentConfig.from_mapping({"sim.N": "32"})
    other = ExperimentConfig.from_mapping({"sim.N": 33})
    assert len(config.content_hash()) == 64
    assert config.content_hash() == same.content_hash()
    assert config.content_hash() != other.content_hash()


def test_record_times_default_to_grid() -> None:
    config = ExperimentConfig.from_mapping({"sim.T": 2.0, "sim.records": 3})
    assert config.sim.times() == (0.0, 1.0, 2.0)
    assert config.sim.params().record_times == (0.0, 1.0, 2.0)


def test_output_dir_precedence(monkeypatch: pytest.MonkeyPatch) -> None:
    config = ExperimentConfig.from_mapping({"output.dir": "from-config"})
    monkeypatch.delenv(OUTPUT_DIR_ENVVAR, raising=False)
    assert resolve_output_dir(None, config) == "from-config"
    monkeypatch.setenv(OUTPUT_DIR_ENVVAR, "from-env")
    assert resolve_output_dir(None, config) == "from-env"
    assert resolve_output_dir("from-cli", config) == "from-cli"


def test_flatten_keeps_lambda_mapping() -> None:
    flat = flatten({"family": {"kind": "perturbed", "lambda": {"1,0": 4}}})
    assert flat == {"family.kind": "perturbed", "family.lambda": {"1,0": 4}}


def test_parse_settings() -> None:
    assert parse_settings(["sim.N=256", "fields.modes=[1, 3]", "coupling.c="]) == {
        "sim.N": 256,
        "fields.modes": [1, 3],
        "coupling.c": None,
    }
    with pytest.raises(ValidationError):
        parse_settings(["sim.N"])


@pytest.mark.parametrize(
    ('mapping', 'n_species', 'kind'),
    (
        pytest.param({}, 2, 'independent', id='independent'),
        pytest.param(
            {'kind': 'multi_color', 'g': 'h_example'}, 2, 'multi_color', id='colored'
        ),
        pytest.param(
            {'kind': 'perturbed_walks', 'x': 3.0, 'y': -0.5},
            2,
            'perturbed',
            id='perturbed-walks',
        ),
        pytest.param({'n_species': 3, 'cap': 6}, 3, 'table', id='capped'),
    ),
)
def test_family_build(mapping: dict, n_species: int, kind: str) -> None:
    family = FamilySpec(**mapping).build()
    assert family.n_species == n_species
    assert family.kind == kind
