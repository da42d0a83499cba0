"""Rule baseline: at risk iff the feature-window E2C ratio is below a threshold."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from datetime import date, timedelta

import numpy as np

from ..calllog import E2C_THRESHOLD, SHORT_FEATURE_DAYS, CallHistory, EngagementLabel, NoConnections, e2c_ratio


@dataclass
class RulePredictorConfig:
    e2c_threshold: float = E2C_THRESHOLD
    window_days: int = SHORT_FEATURE_DAYS

    def __post_init__(self):
        if not 0 < self.e2c_threshold < 1:
            raise ValueError("e2c_threshold must lie in (0, 1)")


def rule_predict(
    history: CallHistory, as_of: date, config: RulePredictorConfig = RulePredictorConfig(), task: str = "short"
) -> EngagementLabel:
    """Label from the window ``[as_of - window_days, as_of)``; no connections counts as at risk."""
    try:
        risky = e2c_ratio(history, as_of - timedelta(days=config.window_days), as_of) < config.e2c_threshold
    except NoConnections:
        risky = True
    if task == "long":
        return EngagementLabel.LLTE if risky else EngagementLabel.HLTE
    return EngagementLabel.SHORT_TERM_HIGH_RISK if risky else EngagementLabel.SHORT_TERM_LOW_RISK


class RuleModel:
    """Array form of :func:`rule_predict` working on the scalar call features."""

    kind = "rule"

    def __init__(self, config: RulePredictorConfig | None = None):
        self.config = config or RulePredictorConfig()

    def fit(self, data) -> "RuleModel":
        return self

    def predict_proba(self, data) -> np.ndarray:
        conn = data.scalar[:, 1]
        eng = data.scalar[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            risky = (conn == 0) | (eng / np.where(conn == 0, 1, conn) < self.config.e2c_threshold)
        return risky.astype(float)

    def meta(self) -> dict:
        return {"config": asdict(self.config)}

    def arrays(self) -> dict:
        return {}

    @classmethod
    def from_parts(cls, meta: dict, arrays: dict) -> "RuleModel":
        return cls(RulePredictorConfig(**meta["config"]))
