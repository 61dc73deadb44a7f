"""
Run Configuration

TOML run files: either a registered scenario by name or an inline scenario
built from manifold, grid, initial, operator, solver and checks tables.

    scenario = "euclid_shrinking_circle"
    output_dir = "./runs"
    checkpoint_every = 500

or

    [inline]
    name = "my_circle"
    [inline.manifold]
    kind = "euclidean"
    [inline.grid]
    resolution = 96
    [inline.initial]
    name = "circle"
    params = { radius = 0.4 }
    [inline.operator]
    kind = "mce"
    [inline.solver]
    t_end_seconds = 0.05
    [[inline.checks]]
    name = "max_principle"

Time keys carry a `_seconds` suffix; they are dimensionless simulation time.
"""

import hashlib
import json
import logging
import os
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError, LevelSetError
from experiments import CheckSpec, FieldRecipe, Procedure, Scenario, get_scenario
from manifold import ManifoldSpec
from operators import CurvatureOperator, OperatorKind
from solver import SolverConfig

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "LEVELSET_OUTPUT_DIR"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ManifoldSection(_Section):
    kind: str
    profile: Optional[str] = None
    radius: float = Field(1.0, gt=0.0)


class GridSection(_Section):
    resolution: int = Field(128, ge=8)
    bounds: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None


class FieldSection(_Section):
    name: str
    params: Dict[str, Any] = Field(default_factory=dict)


class OperatorSection(_Section):
    kind: OperatorKind
    k: int = Field(1, ge=1)


class CheckSection(_Section):
    name: str
    tolerance: Optional[float] = None
    params: Dict[str, Any] = Field(default_factory=dict)


class InlineScenario(_Section):
    """An ad-hoc scenario; mirrors Scenario field by field."""
    name: str = "inline"
    procedure: Procedure = Procedure.EVOLVE
    manifold: ManifoldSection
    grid: GridSection = Field(default_factory=GridSection)
    initial: FieldSection
    second_front: Optional[FieldSection] = None
    operator: OperatorSection = Field(default_factory=lambda: OperatorSection(kind=OperatorKind.MCE))
    solver: SolverConfig = Field(default_factory=SolverConfig)
    checks: List[CheckSection] = Field(default_factory=list)
    relabelings: List[str] = Field(default_factory=list)

    def to_scenario(self) -> Scenario:
        data: Dict[str, Any] = {"kind": self.manifold.kind, "radius": self.manifold.radius}
        if self.manifold.profile is not None:
            data["profile"] = self.manifold.profile
        if self.grid.bounds is not None:
            data["bounds"] = [list(b) for b in self.grid.bounds]
        return Scenario(
            name=self.name,
            manifold=ManifoldSpec.from_dict(data),
            initial=FieldRecipe(self.initial.name, self.initial.params),
            operator=CurvatureOperator(self.operator.kind, k=self.operator.k),
            solver=self.solver,
            checks=tuple(CheckSpec(c.name, c.tolerance, c.params) for c in self.checks),
            resolution=self.grid.resolution,
            procedure=self.procedure,
            second_front=FieldRecipe(self.second_front.name, self.second_front.params) if self.second_front else None,
            relabelings=tuple(self.relabelings),
        )


class RunConfig(_Section):
    """
    A parsed run file.

    Attributes:
        scenario: registered scenario name (exclusive with inline)
        inline: ad-hoc scenario (exclusive with scenario)
        output_dir: artifact root; LEVELSET_OUTPUT_DIR overrides it
        checkpoint_every: checkpoint every N solver steps, 0 = off
        log_level: console log level
        resolution: override for a named scenario's resolution
        workers: override for the solver's worker count
        seed: seed for randomized suites
    """
    scenario: Optional[str] = None
    inline: Optional[InlineScenario] = None
    output_dir: Path = Path("./runs")
    checkpoint_every: int = Field(0, ge=0)
    log_level: str = "INFO"
    resolution: Optional[int] = Field(None, ge=8)
    workers: Optional[int] = Field(None, ge=1)
    seed: int = 0

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"must be one of {', '.join(LOG_LEVELS)}")
        return value

    @model_validator(mode="after")
    def _one_scenario(self) -> "RunConfig":
        if (self.scenario is None) == (self.inline is None):
            raise ValueError("exactly one of 'scenario' and '[inline]' must be given")
        return self

    def resolve_scenario(self) -> Scenario:
        """
        Registry lookup (or inline build) plus overrides, validated.

        Raises:
            ConfigError: unknown names anywhere in the scenario
        """
        try:
            sc = get_scenario(self.scenario) if self.scenario is not None else self.inline.to_scenario()
        except ConfigError:
            raise
        except (LevelSetError, ValueError) as e:
            raise ConfigError(str(e), key="inline") from e
        if self.resolution is not None:
            sc = sc.with_resolution(self.resolution)
        if self.workers is not None:
            sc = sc.with_workers(self.workers)
        return sc.validate()

    def config_hash(self) -> str:
        return scenario_hash(self.resolve_scenario())


def scenario_hash(sc: Scenario) -> str:
    """sha256 of the canonical JSON of a resolved scenario (workers excluded)."""
    data = sc.to_dict()
    data["solver"].pop("workers", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _locate(text: str, loc: Tuple[Any, ...]) -> Tuple[Optional[int], Optional[int]]:
    """Best-effort line/column of the innermost named key in loc."""
    names = [str(part) for part in loc if isinstance(part, str)]
    if not names:
        return None, None
    start_at = 0
    if len(names) > 1:
        table = re.escape(".".join(names[:-1]))
        header = re.search(rf"^\s*\[+\s*{table}\s*\]+", text, re.MULTILINE)
        if header:
            start_at = header.end()
    pattern = re.compile(rf"^(\s*)({re.escape(names[-1])})\s*=|[{{,]\s*({re.escape(names[-1])})\s*=", re.MULTILINE)
    match = pattern.search(text, start_at)
    if not match:
        return None, None
    start = match.start(2) if match.group(2) else match.start(3)
    line = text.count("\n", 0, start) + 1
    column = start - (text.rfind("\n", 0, start) + 1) + 1
    return line, column


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse TOML text into a RunConfig.

    Raises:
        ConfigError: TOML syntax errors (with line/column) and invalid keys (naming the key)
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line, column = getattr(e, "lineno", None), getattr(e, "colno", None)
        if line is None:
            found = re.search(r"line (\d+), column (\d+)", str(e))
            if found:
                line, column = int(found.group(1)), int(found.group(2))
        raise ConfigError(f"{source}: invalid TOML: {e}", line=line, column=column) from e

    override = os.getenv(OUTPUT_DIR_ENV)
    if override:
        data["output_dir"] = override

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        line, column = _locate(text, first["loc"])
        raise ConfigError(f"{source}: invalid value for key '{key}': {first['msg']}",
                          key=key, line=line, column=column) from e


def load_config(path: Union[str, Path], env_file: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Read a run file. A .env file (env_file, or one found from the working
    directory) is loaded first so LEVELSET_OUTPUT_DIR can come from it.

    Raises:
        ConfigError: unreadable file or invalid content
    """
    path = Path(path)
    if env_file is not None:
        load_dotenv(env_file)
    else:
        load_dotenv()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
    cfg = parse_config(text, str(path))
    logger.debug(f"Loaded config {path}: {cfg.scenario or cfg.inline.name}")
    return cfg


def describe_config_error(error: ConfigError, source: Optional[str] = None) -> str:
    """One-line diagnostic: path:line:column: message."""
    where = source or ""
    if error.line is not None:
        where += f":{error.line}"
        if error.column is not None:
            where += f":{error.column}"
    message = str(error)
    if source and message.startswith(f"{source}: "):
        message = message[len(source) + 2:]
    return f"{where}: error: {message}" if where else f"error: {message}"
