"""Experiment configuration and hierarchical seeding.

Config files are flat ``section.key = value`` lines (``#`` comments,
blank lines allowed). Values serialize canonically so that a save/load
round trip is the identity. Environment variables with the prefix
``STOCHRANK_`` override file values for CI, e.g.
``STOCHRANK_TRAIN__LEARNING_RATE=0.1`` overrides ``train.learning_rate``
(section and key joined by a double underscore).

Every random draw in a run derives from the master seed through
``derive_seed(master, component_name, index)``, so adding a component
never perturbs another's randomness.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields, replace

from .ranker import TrainConfig
from .stochastic import DropoutSpec, EnsembleSpec
from .synth import SyntheticCorpusSpec

ENV_PREFIX = "STOCHRANK_"


def derive_seed(master: int, component: str, index: int = 0) -> int:
    """Deterministic 32-bit stream seed for (master, component, index)."""
    digest = hashlib.blake2b(
        f"{master}:{component}:{index}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") % (2**32)


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_k: int = 10
    corpus_train_path: str = "train.jsonl"
    corpus_test_path: str = "test.jsonl"

    synth_train_instances: int = 2000
    synth_test_instances: int = 500
    synth_vocab_size: int = 300
    synth_context_min_tokens: int = 8
    synth_context_max_tokens: int = 16
    synth_response_tokens: int = 8
    synth_relevant_overlap: float = 0.6
    synth_distractor_overlap: float = 0.1
    synth_shift_fraction: float = 0.0

    ns_train_strategy: str = "bm25"
    ns_test_strategy: str = "bm25"

    train_learning_rate: float = 0.05
    train_epochs: int = 5
    train_batch_size: int = 32
    train_balance: bool = True
    train_hidden: int = 16
    train_dropout_rate: float = 0.1

    ensemble_members: int = 5
    dropout_passes: int = 10
    dropout_mask_sharing: str = "shared_per_pass"

    risk_b: float = 0.0
    risk_grid_start: float = 0.0
    risk_grid_stop: float = 1.0
    risk_grid_step: float = 0.05
    risk_negative_probe: float = -0.1

    calibration_buckets: int = 10
    calibration_non_rel_per_query: int = 1

    nota_folds: int = 5
    nota_blocks: str = "sorted_means,sorted_vars_ensemble,sorted_vars_dropout"

    run_master_seed: int = 0
    run_output_dir: str = "out"

    # --- derived objects -------------------------------------------------

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.train_learning_rate,
            epochs=self.train_epochs,
            batch_size=self.train_batch_size,
            balance=self.train_balance,
            hidden=self.train_hidden,
            dropout_rate=self.train_dropout_rate,
        )

    def ensemble_spec(self) -> EnsembleSpec:
        seeds = tuple(
            derive_seed(self.run_master_seed, "ensemble", i)
            for i in range(self.ensemble_members)
        )
        return EnsembleSpec(member_seeds=seeds, train_config=self.train_config())

    def dropout_spec(self) -> DropoutSpec:
        return DropoutSpec(
            passes=self.dropout_passes,
            dropout_rate=self.train_dropout_rate,
            pass_seed_base=derive_seed(self.run_master_seed, "dropout", 0),
            mask_sharing=self.dropout_mask_sharing,
        )

    def synth_spec(self, split: str) -> SyntheticCorpusSpec:
        if split == "train":
            count, shift = self.synth_train_instances, 0.0
        elif split == "test":
            count, shift = self.synth_test_instances, self.synth_shift_fraction
        else:
            raise ValueError(f"unknown split {split!r}")
        return SyntheticCorpusSpec(
            instance_count=count,
            vocab_size=self.synth_vocab_size,
            context_min_tokens=self.synth_context_min_tokens,
            context_max_tokens=self.synth_context_max_tokens,
            response_tokens=self.synth_response_tokens,
            k=self.corpus_k,
            relevant_overlap=self.synth_relevant_overlap,
            distractor_overlap=self.synth_distractor_overlap,
            shift_fraction=shift,
            seed=derive_seed(self.run_master_seed, f"gen-{split}", 0),
            id_prefix=split,
        )

    def b_grid(self) -> tuple[float, ...]:
        grid = []
        b = self.risk_grid_start
        step = self.risk_grid_step
        n = int(round((self.risk_grid_stop - self.risk_grid_start) / step)) if step > 0 else 0
        grid = [round(self.risk_grid_start + i * step, 10) for i in range(n + 1)]
        if 0.0 not in grid:
            grid.insert(0, 0.0)
        return tuple(grid) + (self.risk_negative_probe,)

    def nota_block_list(self) -> tuple[str, ...]:
        return tuple(b.strip() for b in self.nota_blocks.split(",") if b.strip())


_SECTION_KEYS = {f.name: f.name.replace("_", ".", 1) for f in fields(ExperimentConfig)}
_KEY_FIELDS = {v: k for k, v in _SECTION_KEYS.items()}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        lines.append(f"{_SECTION_KEYS[f.name]} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))


def _field_types():
    return {f.name: type(getattr(ExperimentConfig(), f.name)) for f in fields(ExperimentConfig)}


def config_from_pairs(pairs: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    types = _field_types()
    updates = {}
    for key, raw in pairs.items():
        if key not in _KEY_FIELDS:
            raise KeyError(f"unknown config key {key!r}")
        name = _KEY_FIELDS[key]
        updates[name] = _parse_value(raw, types[name])
    return replace(cfg, **updates)


def load_config(path, apply_env: bool = True) -> ExperimentConfig:
    pairs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'section.key = value'")
            key, raw = stripped.split("=", 1)
            pairs[key.strip()] = raw.strip()
    cfg = config_from_pairs(pairs)
    if apply_env:
        cfg = apply_env_overrides(cfg)
    return cfg


def apply_env_overrides(cfg: ExperimentConfig, environ=None) -> ExperimentConfig:
    environ = os.environ if environ is None else environ
    pairs = {}
    for key in _KEY_FIELDS:
        section, name = key.split(".", 1)
        env_name = ENV_PREFIX + section.upper() + "__" + name.upper()
        if env_name in environ:
            pairs[key] = environ[env_name]
    return config_from_pairs(pairs, base=cfg) if pairs else cfg


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()[:12]
