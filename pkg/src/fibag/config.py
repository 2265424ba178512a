"""Process settings, pipeline configuration and scenario files.

Precedence for pipeline values: command-line flags, then ``FIBAG_*``
environment variables (nested keys joined with ``__``), then the TOML or
JSON config file, then model defaults. Relative data paths in a config file
resolve against the file's directory.
"""

import hashlib
import json
import tomllib
from pathlib import Path

from pydantic import BaseModel, Field
from pydantic_settings import (
    BaseSettings,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from fibag.calibration.models import AggregationScheme, CalibrationConfig
from fibag.cbvs.models import Algorithm, CbvsConfig
from fibag.data.models import IngestConfig
from fibag.errors import UsageError
from fibag.mechanistic.models import GpHyperParams, QuadratureConfig
from fibag.selection.fdr import FdrRule, FdrRuleField
from fibag.simulation.models import ScenarioConfig
from fibag.utils.io import to_json_text

STOCHASTIC_ALGORITHMS = frozenset({Algorithm.GIBBS, Algorithm.SELECTION_MCMC})


class MissingSeed(UsageError):
    """Raised when a stochastic command runs without a master seed."""


class Settings(BaseSettings):
    model_config = {"env_file": ".env", "env_file_encoding": "utf-8", "env_prefix": "FIBAG_",
                    "extra": "ignore"}

    log_level: str = "info"
    jobs: int = 1
    out_dir: Path = Path("fibag-out")


class FdrSettings(BaseModel):
    alpha: float = Field(0.1, gt=0, le=1)
    rule: FdrRuleField = FdrRule.CUMULATIVE_SUM


class PipelineConfig(BaseSettings):
    """Everything one pipeline run needs; see the module docstring for precedence."""

    model_config = SettingsConfigDict(
        env_prefix="FIBAG_",
        env_nested_delimiter="__",
        extra="forbid",
    )

    data: IngestConfig | None = None
    hyper: GpHyperParams = GpHyperParams()
    quadrature: QuadratureConfig = QuadratureConfig()
    aggregation: AggregationScheme = AggregationScheme()
    calibration: CalibrationConfig = CalibrationConfig()
    cbvs: CbvsConfig = CbvsConfig()
    fdr: FdrSettings = FdrSettings()
    seed: int | None = None
    jobs: int = Field(1, ge=1)
    out_dir: Path = Path("fibag-out")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            TomlConfigSettingsSource(settings_cls),
            JsonConfigSettingsSource(settings_cls),
        )

    def require_seed(self, command: str) -> int:
        if self.seed is None:
            raise MissingSeed(f"'{command}' is stochastic and needs --seed (or 'seed' in the config)")
        return self.seed

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the output directory."""
        payload = self.model_dump(mode="json", exclude={"out_dir", "jobs"})
        return hashlib.sha256(to_json_text(payload).encode()).hexdigest()


def _file_key(path: Path) -> str:
    match path.suffix.lower():
        case ".toml":
            return "toml_file"
        case ".json":
            return "json_file"
        case _:
            raise UsageError(f"config file must be .toml or .json, got {path}")


def _resolve_data_paths(data: IngestConfig, base: Path) -> IngestConfig:
    def _resolve(p: Path | None) -> Path | None:
        return p if p is None or p.is_absolute() else base / p

    return data.model_copy(update={
        "upstream": {label: _resolve(p) for label, p in data.upstream.items()},
        "genes": _resolve(data.genes),
        "proteins": _resolve(data.proteins),
        "covariates": _resolve(data.covariates),
        "outcome": _resolve(data.outcome),
        "biomarker_map": _resolve(data.biomarker_map),
    })


def load_pipeline_config(path: Path | None = None, **overrides) -> PipelineConfig:
    """Build a :class:`PipelineConfig`; ``overrides`` are flag values (``None`` entries skipped)."""
    flags = {key: value for key, value in overrides.items() if value is not None}
    if path is None:
        return PipelineConfig(**flags)

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such config file: {path}")
    file_cls = type(
        "FilePipelineConfig",
        (PipelineConfig,),
        {"model_config": {**PipelineConfig.model_config, _file_key(path): path}},
    )
    config = file_cls(**flags)
    if config.data is not None:
        config = config.model_copy(update={"data": _resolve_data_paths(config.data, path.parent)})
    return config


def read_config_file(path: Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such config file: {path}")
    match _file_key(path):
        case "toml_file":
            with path.open("rb") as fh:
                return tomllib.load(fh)
        case _:
            return json.loads(path.read_text(encoding="utf-8"))


def load_scenario(path: Path, **overrides) -> ScenarioConfig:
    values = read_config_file(path)
    values.update({key: value for key, value in overrides.items() if value is not None})
    if values.get("seed") is None:
        raise MissingSeed(f"scenario {path} has no seed; pass --seed")
    return ScenarioConfig.model_validate(values)
