"""JSON checkpoints: parameters in full double precision plus config and normalization stats."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import make_model
from .dataset import NormStats
from .errors import DataError
from .model import TrainConfig

VERSION = 1


def checkpoint_dict(model) -> dict:
    config = model.config.to_json()
    config.update({"model": model.kind, "n_topics": model.n_topics, "w": model.w})
    params = [{"name": name, "shape": list(p.data.shape), "data": [float(v) for v in p.data.ravel()]}
              for name, p in model.params.items()]
    return {"version": VERSION, "params": params, "config": config,
            "norm_stats": {"counts": model.norm.to_json(), "ref": model.ref_stats.to_json()}}


def dump_checkpoint(model) -> str:
    # repr of a Python float round-trips exactly, so json keeps every bit
    return json.dumps(checkpoint_dict(model), separators=(",", ":")) + "\n"


def save_checkpoint(model, path: str | Path):
    Path(path).write_text(dump_checkpoint(model), encoding="utf-8")


def model_from_dict(obj: dict):
    try:
        if obj["version"] != VERSION:
            raise DataError(f"unsupported checkpoint version {obj['version']}")
        cfg = dict(obj["config"])
        kind, n_topics, w = cfg.pop("model"), int(cfg.pop("n_topics")), int(cfg.pop("w"))
        norm = NormStats.from_json(obj["norm_stats"]["counts"])
        ref_stats = NormStats.from_json(obj["norm_stats"]["ref"])
        model = make_model(kind, TrainConfig.from_json(cfg), n_topics, w, norm, ref_stats)
        stored = {p["name"]: np.array(p["data"], dtype=np.float64).reshape(p["shape"]) for p in obj["params"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed checkpoint: {exc}") from exc
    missing = set(model.params) ^ set(stored)
    if missing:
        raise DataError(f"checkpoint parameters do not match the {kind} model: {sorted(missing)}")
    model.load_state(stored)
    return model


def load_checkpoint(path: str | Path):
    """Rebuild the model a checkpoint describes, with its stored weights."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(obj)
