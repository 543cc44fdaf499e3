"""Pipeline configuration: explicit seeds, stable hashing, TOML/JSON loading."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


DEFAULTS: dict[str, Any] = {
    "input": "",
    "label_rules": "",
    "workspace": "workspace",
    "seed": 0,
    "layout_id": "nprint-1088-v1",
    "color_table": "",
    "prompts": {
        "global": "network traffic image",
        "templates": {},
    },
    "temporal": {
        "bin_width": 1.0,
        "resample_len": 128,
        "k": 3,
        "period": 0,  # 0 = choose by autocorrelation peak
        "n_fourier": 32,
        "l_min": 16,
        "l_max": 64,
        "match_threshold": 0.0,  # 0 = calibrate from the training cluster
        "min_support": 3,
        "min_series_gap": 5.0,
        "diffusion": {
            "n_steps": 50,
            "beta_start": 0.002,
            "beta_end": 0.4,
            "hidden": 128,
            "emb_dim": 32,
            "epochs": 120,
            "batch_size": 32,
            "lr": 1e-3,
        },
    },
    "combine": {
        "method": "imitative",
        "total_time": 0.0,  # 0 = 2x the source chain's horizon
        "counts": 8,
    },
    "fields": {
        "samples_per_label": 256,
    },
    "eval": {
        "unit": "field",
    },
}


@dataclass(frozen=True)
class PipelineConfig:
    values: dict[str, Any]

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, *path, default=None):
        node: Any = self.values
        for key in path:
            if not isinstance(node, dict) or key not in node:
                return default
            node = node[key]
        return node

    @property
    def config_hash(self) -> str:
        # the workspace is where artifacts live, not what they contain;
        # leaving it out keeps relocated runs byte-comparable
        hashed = {k: v for k, v in self.values.items() if k != "workspace"}
        canonical = json.dumps(hashed, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path: Optional[str] = None,
             overrides: Optional[dict] = None) -> "PipelineConfig":
        values = dict(DEFAULTS)
        if path:
            p = Path(path)
            if p.suffix == ".toml":
                loaded = tomllib.loads(p.read_text(encoding="utf-8"))
            elif p.suffix == ".json":
                loaded = json.loads(p.read_text(encoding="utf-8"))
            else:
                raise ValueError(f"config must be .toml or .json, got {p.name}")
            values = _merge(values, loaded)
        if overrides:
            values = _merge(values, overrides)
        return cls(values=values)


class StageOrderError(RuntimeError):
    def __init__(self, missing: str, run_first: str):
        super().__init__(f"missing artifact {missing!r}: run '{run_first}' first")
        self.run_first = run_first


class ConfigHashError(RuntimeError):
    pass


def check_artifact(path: Path, producing_stage: str) -> Path:
    if not Path(path).exists():
        raise StageOrderError(str(path), producing_stage)
    return Path(path)


def check_hash(found: str, expected: str, artifact: str) -> None:
    if found and expected and found != expected:
        raise ConfigHashError(
            f"{artifact}: config hash {found} does not match the current "
            f"config {expected}; regenerate upstream artifacts")
