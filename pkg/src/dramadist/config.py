"""Run configuration: TOML file, flag overrides, validation."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .energy import BootstrapConfig
from .ingest import DEFAULT_API, LOCAL, REMOTE, CorpusDescriptor
from .keyness import DEFAULT_ALPHA0
from .pipeline import AnalysisSettings
from .report import MIN_WORDS

CACHE_ENV = "DRAMADIST_CACHE"
STUDIED_CORPORA = ("shake", "fre", "ger", "rus")

FIELD_HELP = {
    "corpora": "corpus ids to process (DraCor short names, or subdirectories of corpus_dir)",
    "source": f"where plays come from: {REMOTE} (DraCor HTTP API) or {LOCAL} (TEI files)",
    "base_url": "DraCor API base URL",
    "corpus_dir": "root directory holding one subdirectory of TEI files per corpus (local source)",
    "cache_dir": f"raw payload cache; defaults to ${CACHE_ENV} or ./cache",
    "output_dir": "directory receiving all exported tables",
    "min_words": "minimum words spoken for a character to be analysed (inclusive)",
    "replicates": "bootstrap replicates B (>= 2)",
    "seed": "64-bit base seed for all resampling",
    "ci_level": "confidence level of percentile intervals, in (0, 1)",
    "distance_form": "reported energy distance form: root or squared",
    "alpha0": "total prior mass of the weighted log-odds Dirichlet prior",
    "plots": "emit plot data tables",
    "model_matrix": "emit the regression model matrix",
    "workers": "parallel worker processes (plays) / fetch threads",
}

# Fields that change output files; paths and worker counts do not.
_RESULT_FIELDS = ("corpora", "source", "min_words", "replicates", "seed", "ci_level",
                  "distance_form", "alpha0")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class RunConfig:
    corpora: tuple[str, ...] = STUDIED_CORPORA
    source: str = REMOTE
    base_url: str = DEFAULT_API
    corpus_dir: Optional[str] = None
    cache_dir: str = "cache"
    output_dir: str = "out"
    min_words: int = MIN_WORDS
    replicates: int = 1000
    seed: int = 20221130
    ci_level: float = 0.95
    distance_form: str = "root"
    alpha0: float = DEFAULT_ALPHA0
    plots: bool = True
    model_matrix: bool = True
    workers: int = 1

    def bootstrap(self) -> BootstrapConfig:
        return BootstrapConfig(replicates=self.replicates, seed=self.seed, ci_level=self.ci_level,
                               form=self.distance_form)

    def settings(self) -> AnalysisSettings:
        return AnalysisSettings(self.bootstrap(), self.min_words, self.alpha0)

    def validate(self) -> list[str]:
        problems = []
        if not self.corpora:
            problems.append("corpora: at least one corpus is required")
        if self.source not in (REMOTE, LOCAL):
            problems.append(f"source={self.source!r}: must be {REMOTE!r} or {LOCAL!r}")
        if self.source == LOCAL and not self.corpus_dir:
            problems.append("corpus_dir: required when source is local_directory")
        if self.min_words < 0:
            problems.append(f"min_words={self.min_words}: must be >= 0")
        if not self.alpha0 > 0:
            problems.append(f"alpha0={self.alpha0}: must be positive")
        if self.workers < 1:
            problems.append(f"workers={self.workers}: must be >= 1")
        # report bootstrap problems under the config key names
        problems += ["distance_" + p if p.startswith("form=") else p for p in self.bootstrap().validate()]
        return problems

    def check(self) -> "RunConfig":
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        return self

    def descriptors(self) -> list[CorpusDescriptor]:
        if self.source == LOCAL:
            return [CorpusDescriptor(c, LOCAL, str(Path(self.corpus_dir) / c)) for c in self.corpora]
        return [CorpusDescriptor(c, REMOTE, self.base_url) for c in self.corpora]

    def fingerprint(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k in _RESULT_FIELDS}
        d["corpora"] = list(d["corpora"])
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def metadata(self) -> dict:
        return {
            "config_hash": self.fingerprint(),
            "seed": self.seed,
            "replicates": self.replicates,
            "ci_level": self.ci_level,
            "ci_method": "percentile",
            "distance_form": self.distance_form,
            "distance_metric": "discrete",
            "resample_size": "character_size",
            "alpha0": self.alpha0,
            "prior": "play_pooled",
            "upsample_mode": "deterministic_count_scaling",
            "min_words": self.min_words,
        }


def _coerce(name: str, value):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if value is None:
        return None
    if name == "corpora":
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return tuple(str(v) for v in value)
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    return str(value)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the TOML file, then non-None ``overrides``.

    Every problem is collected and raised together as :class:`ConfigError`.
    """
    values: dict = {}
    problems: list[str] = []
    env_cache = os.environ.get(CACHE_ENV)
    if env_cache:
        values["cache_dir"] = env_cache
    if path:
        try:
            raw = tomllib.loads(Path(path).read_text("utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError([f"config file {path}: {exc}"]) from None
        raw = raw.get("dramadist", raw)
        values.update(raw)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    coerced = {}
    for k, v in values.items():
        if k not in known:
            problems.append(f"{k}: unknown configuration key")
            continue
        try:
            coerced[k] = _coerce(k, v)
        except (TypeError, ValueError):
            problems.append(f"{k}={v!r}: wrong type")
    cfg = replace(RunConfig(), **coerced)
    problems += cfg.validate()
    if problems:
        raise ConfigError(problems)
    return cfg
