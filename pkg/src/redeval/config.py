"""Run configuration: one YAML file, validated once, then passed around."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .corpus import DEFAULT_TOKEN_BUDGET, MIN_TOKEN_BUDGET
from .errors import ValidationError
from .util import sha256_text, stable_json

BACKEND_MOCK = "mock"
BACKEND_PROVIDER = "provider"
RETRIEVER_IDS = ("bm25", "dense")


@dataclass
class ProviderConfig:
    endpoint: str = "https://api.openai.com/v1"
    chat_model: str = "gpt-4o-mini"
    embed_model: str = "text-embedding-3-large"
    api_key_env: str = "REDEVAL_API_KEY"


@dataclass
class PriceConfig:
    prompt_per_1k: float = 0.0
    completion_per_1k: float = 0.0
    embed_per_1k: float = 0.0


@dataclass
class AblationConfig:
    dataset: str | None = None
    runs: int = 1
    strategies: list = field(default_factory=list)  # [] means the full grid


@dataclass
class RunConfig:
    backend: str = BACKEND_MOCK
    seed: int = 42
    run_dir: str = "runs/default"
    corpus_source: str | None = None
    domain_tag: str = "general"
    token_budget: int = DEFAULT_TOKEN_BUDGET
    top_k_atoms: int = 3
    tau: float = 0.5
    pool_sample: int = 100
    hops: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    candidates_per_sample: int = 10
    samples_per_hop: int = 25
    eval_k: int = 10
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    retrievers: list[str] = field(default_factory=lambda: ["bm25"])
    context_budget: int = 4096
    mock_embed_dim: int = 64
    max_in_flight: int = 8
    transcripts: bool = False
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    prices: PriceConfig = field(default_factory=PriceConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> "RunConfig":
        if self.backend not in (BACKEND_MOCK, BACKEND_PROVIDER):
            raise ValidationError(f"unknown backend {self.backend!r}")
        if not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer")
        if self.token_budget < MIN_TOKEN_BUDGET:
            raise ValidationError(
                f"token_budget {self.token_budget} below minimum {MIN_TOKEN_BUDGET}"
            )
        if self.top_k_atoms < 1:
            raise ValidationError("top_k_atoms must be at least 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError(f"tau must be in [0, 1], got {self.tau}")
        if self.pool_sample < 1:
            raise ValidationError("pool_sample must be at least 1")
        bad = [h for h in self.hops if h not in (1, 2, 3, 4)]
        if bad or not self.hops:
            raise ValidationError(f"hops must be a non-empty subset of 1..4, got {self.hops}")
        if self.candidates_per_sample < 1:
            raise ValidationError("candidates_per_sample must be at least 1")
        if self.samples_per_hop < 1:
            raise ValidationError("samples_per_hop must be at least 1")
        if self.eval_k < 1:
            raise ValidationError("eval_k must be at least 1")
        if self.bm25_k1 < 0 or not 0.0 <= self.bm25_b <= 1.0:
            raise ValidationError("bad BM25 parameters")
        unknown = [r for r in self.retrievers if r not in RETRIEVER_IDS]
        if unknown or not self.retrievers:
            raise ValidationError(f"retrievers must be drawn from {RETRIEVER_IDS}")
        if self.context_budget < 1:
            raise ValidationError("context_budget must be at least 1")
        if self.mock_embed_dim < 2:
            raise ValidationError("mock_embed_dim must be at least 2")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be at least 1")
        if self.ablation.runs < 1:
            raise ValidationError("ablation.runs must be at least 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return sha256_text(stable_json(self.to_dict()))


def _build(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValidationError("config root must be a mapping")
    data = dict(data)
    nested = {
        "provider": ProviderConfig,
        "prices": PriceConfig,
        "ablation": AblationConfig,
    }
    kwargs = {}
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    for key, value in data.items():
        if key in nested:
            sub_cls = nested[key]
            sub_known = set(sub_cls.__dataclass_fields__)
            sub_unknown = set(value or {}) - sub_known
            if sub_unknown:
                raise ValidationError(
                    f"unknown config keys {sorted(f'{key}.{u}' for u in sub_unknown)}"
                )
            kwargs[key] = sub_cls(**(value or {}))
        else:
            kwargs[key] = value
    return RunConfig(**kwargs).validate()


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse the YAML config and apply CLI overrides (seed, backend, run_dir)."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"config file is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return _build(data)
