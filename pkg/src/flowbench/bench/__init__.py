"""Metrics, identity baseline, single-step evaluation, rollouts, cost profiling and reports."""
from .metrics import METRICS, NMSE_EPS, compute_metrics, frame_metrics
from .evaluate import (IdentityStepper, MetricsReport, RolloutCurve, eval_identity, evaluate, inference_mode,
                       mean_curve, rollout, rollout_many)
from .profile import CostProfile, profile
from .report import COLUMNS, emit_report, read_results

__all__ = [
    "COLUMNS", "CostProfile", "IdentityStepper", "METRICS", "MetricsReport", "NMSE_EPS", "RolloutCurve",
    "compute_metrics", "emit_report", "eval_identity", "evaluate", "frame_metrics", "inference_mode", "mean_curve",
    "profile", "read_results", "rollout", "rollout_many",
]
