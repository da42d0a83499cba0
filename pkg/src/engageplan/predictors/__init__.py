"""Drop-off predictors and their (de)serialization."""

from __future__ import annotations

from ..datafiles import load_container, save_container
from .condip import CondipConfig, CondipModel, TrainConfig, condip_train
from .forest import DecisionTree, ForestConfig, RandomForest, train_tree
from .metrics import MetricReport, evaluate
from .rule import RuleModel, RulePredictorConfig, rule_predict

MODEL_KINDS = {"rule": RuleModel, "forest": RandomForest, "condip": CondipModel}


def save_model(path, model, seed: int | None = None, prov: dict | None = None, task: str | None = None) -> None:
    meta = {"model": model.kind, "seed": seed, "task": task, **model.meta()}
    save_container(path, "model", meta, model.arrays(), prov)


def load_model(path):
    """Model object; ``.task`` is the task it was trained for (None if unrecorded)."""
    meta, arrays = load_container(path, "model")
    model = MODEL_KINDS[meta["model"]].from_parts(meta, arrays)
    model.task = meta.get("task")
    return model


__all__ = [
    "CondipConfig", "CondipModel", "TrainConfig", "condip_train", "DecisionTree", "ForestConfig", "RandomForest",
    "train_tree", "MetricReport", "evaluate", "RuleModel", "RulePredictorConfig", "rule_predict", "save_model",
    "load_model", "MODEL_KINDS",
]
