"""Static metric registry: id, optimization direction, normalization rule."""

from __future__ import annotations

from dataclasses import dataclass

from .types import MetricDirection, NormalizationRule, ObjectiveKind, UNKNOWN


@dataclass(frozen=True)
class MetricInfo:
    metric_id: str
    direction: MetricDirection
    rule: NormalizationRule


_METRICS = {
    m.metric_id: m
    for m in (
        MetricInfo("accuracy", MetricDirection.HIGHER_BETTER, NormalizationRule.IDENTITY),
        MetricInfo("f1", MetricDirection.HIGHER_BETTER, NormalizationRule.IDENTITY),
        MetricInfo("auc", MetricDirection.HIGHER_BETTER, NormalizationRule.IDENTITY),
        MetricInfo("logloss", MetricDirection.LOWER_BETTER, NormalizationRule.EXP_DECAY),
        MetricInfo("mae", MetricDirection.LOWER_BETTER, NormalizationRule.EXP_DECAY),
        MetricInfo("rmse", MetricDirection.LOWER_BETTER, NormalizationRule.EXP_DECAY),
        MetricInfo(
            "quadratic_weighted_kappa", MetricDirection.BOUNDED_PM1, NormalizationRule.BOUNDED_AFFINE
        ),
        MetricInfo("matthews_corr", MetricDirection.BOUNDED_PM1, NormalizationRule.BOUNDED_AFFINE),
    )
}

# Common spellings seen in task descriptions mapped onto registry ids.
_ALIASES = {
    "acc": "accuracy",
    "f1-score": "f1",
    "f1_score": "f1",
    "roc_auc": "auc",
    "roc-auc": "auc",
    "log_loss": "logloss",
    "log-loss": "logloss",
    "root_mean_squared_error": "rmse",
    "mean_absolute_error": "mae",
    "qwk": "quadratic_weighted_kappa",
    "kappa": "quadratic_weighted_kappa",
    "mcc": "matthews_corr",
    "matthews": "matthews_corr",
}


def resolve(metric_id: str) -> MetricInfo | None:
    key = metric_id.strip().lower()
    key = _ALIASES.get(key, key)
    return _METRICS.get(key)


def is_known(metric_id: str) -> bool:
    return resolve(metric_id) is not None


def all_metrics() -> tuple[MetricInfo, ...]:
    return tuple(_METRICS[k] for k in sorted(_METRICS))


def default_metric(objective: ObjectiveKind) -> str:
    if objective is ObjectiveKind.CLASSIFICATION:
        return "accuracy"
    if objective is ObjectiveKind.REGRESSION:
        return "rmse"
    return UNKNOWN
