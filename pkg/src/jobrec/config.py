"""Pipeline configuration, config-file parsing and provenance stamps.

Artifacts carry '# key=value' header lines recording the producing stage,
a hash of the semantic configuration knobs and the seed. The evaluate
command compares these hashes to catch mixed-provenance inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .gbdt import TrainConfig

THREADS_ENV = "RECSYS_THREADS"

# knobs that change results and therefore feed the provenance hash;
# paths, thread counts and verbosity intentionally excluded
_HASHED_FIELDS = (
    "seed",
    "holdout_weeks",
    "candidate_cap",
    "neighbor_count",
    "sampling_mode",
    "recall_mode",
    "max_depth",
    "min_child_weight",
    "eta",
    "gamma",
    "num_round",
    "reg_lambda",
    "early_stopping_rounds",
)


@dataclass
class PipelineConfig:
    seed: int = 42
    holdout_weeks: int = 1
    candidate_cap: int = 60
    neighbor_count: int = 60
    sampling_mode: str = "paper"
    recall_mode: str = "corrected"
    max_depth: int = 5
    min_child_weight: float = 5.0
    eta: float = 0.1
    gamma: float = 1.0
    num_round: int = 1000
    reg_lambda: float = 1.0
    early_stopping_rounds: int | None = 20
    threads: int = 0  # 0 means: RECSYS_THREADS env var, else 1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            max_depth=self.max_depth,
            min_child_weight=self.min_child_weight,
            eta=self.eta,
            gamma=self.gamma,
            num_round=self.num_round,
            reg_lambda=self.reg_lambda,
            early_stopping_rounds=self.early_stopping_rounds,
            seed=self.seed,
        )

    def config_hash(self) -> str:
        payload = {name: getattr(self, name) for name in _HASHED_FIELDS}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def provenance(self, stage: str) -> dict[str, object]:
        return {"stage": stage, "config": self.config_hash(), "seed": self.seed}

    def resolve_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get(THREADS_ENV, "")
        if env.strip():
            try:
                n = int(env)
            except ValueError:
                raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
            if n < 1:
                raise ValueError(f"{THREADS_ENV} must be >= 1, got {n}")
            return n
        return 1


def _coerce(raw: str):
    low = raw.strip().lower()
    if low in ("none", "null", ""):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw.strip()


def parse_config_file(path: str | Path) -> dict[str, object]:
    """key=value lines; '#' starts a comment; unknown keys are rejected."""
    known = {f.name for f in fields(PipelineConfig)}
    out: dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(value)
    return out


def load_config(config_path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Defaults, then config file values, then non-None keyword overrides."""
    values = asdict(PipelineConfig())
    if config_path is not None:
        values.update(parse_config_file(config_path))
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    return PipelineConfig(**values)
