"""Experiment configuration: TOML parsing and field-level validation.

One config file describes one experiment run. Every run is seeded explicitly;
a missing seed is a validation error, never a silent default.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

try:
    import tomllib as _toml
except ModuleNotFoundError:            # Python < 3.11
    import tomli as _toml

from .errors import ConfigError

EXPERIMENT_KINDS = ("rate", "split-chain", "transport-selftest", "ustat",
                    "blocks", "dependence-functional")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    name: str = ""
    generator: dict = None
    chain: object = None               # JSON text or nested table
    p: float = 1.0
    q: float = 2.0
    n_grid: list = field(default_factory=list)
    reps: int = 32
    m: int = 1024
    pool: int = 0                      # 0 -> max(4*m, 4096)
    debias: bool = False
    exponent_setting: str = ""
    exponent_params: dict = field(default_factory=dict)
    slope_window: list = None
    output: str = "results"
    budget_secs: float = None
    threads: int = 0                   # 0 -> env CLT_LAB_THREADS or 1
    # split-chain
    num_traces: int = 64
    min_cycles: int = 1000
    block_m: int = 1                   # minorization block length
    # dependence-functional
    outer_reps: int = 8
    inner_m: int = 512
    # blocks
    M: int = 1
    block_reps: int = 256

    def __post_init__(self):
        if self.pool == 0:
            self.pool = max(4 * self.m, 4096)
        if not self.name:
            self.name = self.experiment
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"experiment: {self.experiment!r} not in {EXPERIMENT_KINDS}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed: required integer, got {self.seed!r}")
        grid = list(self.n_grid)
        if any(not isinstance(n, int) or n < 1 for n in grid):
            raise ConfigError("n_grid: entries must be integers >= 1")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid: must be strictly increasing")
        if self.p < 1:
            raise ConfigError(f"p: must be >= 1, got {self.p}")
        if not (0 < self.q <= 2):
            raise ConfigError(f"q: must be in (0, 2], got {self.q}")
        if self.m < 2 or self.reps < 1:
            raise ConfigError("m/reps: need m >= 2 and reps >= 1")
        if self.pool < self.m:
            raise ConfigError(f"pool: {self.pool} smaller than m={self.m}")
        if self.experiment in ("rate", "ustat"):
            if not grid:
                raise ConfigError("n_grid: required for rate experiments")
            if self.generator is None and self.chain is None:
                raise ConfigError("generator: rate experiments need a "
                                  "generator table or a chain")
        if self.experiment == "dependence-functional":
            if not grid:
                raise ConfigError("n_grid: required")
            if max(grid) > 256:
                raise ConfigError("n_grid: dependence functional is capped "
                                  "at n <= 256")
            if self.generator is None and self.chain is None:
                raise ConfigError("chain: dependence functional needs a "
                                  "chain or an iid generator table")
        if self.experiment == "split-chain" and self.chain is None:
            raise ConfigError("chain: split-chain experiments need one")
        if self.experiment == "blocks" and self.p < 2:
            raise ConfigError("p: the block-length rule needs p >= 2")
        # referenced profiles/chains must construct cleanly now, not mid-run
        if self.generator is not None:
            gen = dict(self.generator)
            if self.experiment == "ustat":
                gen.setdefault("kind", "ustat-variance")
            self._check_generator(gen)
        if self.chain is not None:
            from .rates import _coerce_chain
            try:
                _coerce_chain(self.chain)
            except Exception as exc:
                raise ConfigError(f"chain: {exc}") from exc

    @staticmethod
    def _check_generator(gen: dict):
        kind = gen.get("kind")
        if kind in ("iid", "ma1", "ustat-variance"):
            from .generators import MomentProfile
            try:
                MomentProfile(gen.get("family", ""), gen.get("params", {}))
            except Exception as exc:
                raise ConfigError(f"generator.family: {exc}") from exc
        elif kind == "markov":
            from .rates import _coerce_chain
            try:
                _coerce_chain(gen["chain"])
            except Exception as exc:
                raise ConfigError(f"generator.chain: {exc}") from exc
        elif kind != "control":
            raise ConfigError(f"generator.kind: unknown kind {kind!r}")


def load_config(path: str, overrides: dict = None) -> ExperimentConfig:
    """Parse a TOML experiment file, apply CLI overrides, validate."""
    try:
        with open(path, "rb") as fh:
            try:
                doc = _toml.load(fh)
            except _toml.TOMLDecodeError as exc:
                raise ConfigError(f"TOML parse error in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc, overrides)


def config_from_dict(doc: dict, overrides: dict = None) -> ExperimentConfig:
    doc = dict(doc)
    for key, val in (overrides or {}).items():
        if val is not None:
            doc[key] = val
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    if "experiment" not in doc:
        raise ConfigError("experiment: required field is missing")
    if "seed" not in doc:
        raise ConfigError("seed: required field is missing")
    try:
        return ExperimentConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
