"""Metrics, counterfactual perturbation and ablation runners."""
from .counterfactual import (CounterfactualReport, CounterfactualRow, counterfactual_run, direction_consistent,
                             names_feature, perturb_feature)
from .metrics import (ConfusionMatrix, MetricReport, accuracy_cdf, confusion, format_report, metrics,
                      per_user_accuracy, write_metric_rows, write_per_user)

__all__ = [
    "ConfusionMatrix", "CounterfactualReport", "CounterfactualRow", "MetricReport", "accuracy_cdf", "confusion",
    "counterfactual_run", "direction_consistent", "format_report", "metrics", "names_feature", "per_user_accuracy",
    "perturb_feature", "write_metric_rows", "write_per_user",
]
