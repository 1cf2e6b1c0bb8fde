"""Identity baseline, single-step evaluation and multi-step rollouts."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..diffmath import Tensor
from ..errors import EmptyInputError
from ..operators import Model, ModelSpec, predict_frame_at, predict_next_field
from .metrics import METRICS, compute_metrics, frame_metrics


@dataclass
class MetricsReport:
    model: str
    problem: str
    subset: str
    split: str
    metrics: dict
    n_frames: int
    flagged: bool = False

    def records(self):
        return [dict(model=self.model, problem=self.problem, subset=self.subset, split=self.split, metric=m,
                     step="", value=self.metrics[m]) for m in METRICS]


@dataclass
class RolloutCurve:
    model: str
    problem: str
    case_id: str
    steps: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)  # name -> per-step list
    subset: str = ""

    def records(self, split="test"):
        return [dict(model=self.model, problem=self.problem, subset=self.subset, split=split, metric=m, step=s,
                     value=v) for m in METRICS for s, v in zip(self.steps, self.metrics[m])]


@contextmanager
def inference_mode(model):
    was = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    try:
        yield model
    finally:
        if hasattr(model, "train"):
            model.train(was)


def _subset_label(dataset, ids):
    subsets = sorted({dataset.records[c].meta.subset for c in ids})
    return "+".join(subsets)


def _select(dataset, split, subset):
    ids = dataset.ids(split)
    if subset is not None:
        ids = [c for c in ids if dataset.records[c].meta.subset == subset]
    if not ids:
        raise EmptyInputError(f"no {split!r} cases" + (f" in subset {subset!r}" if subset else ""))
    return ids


def _report(name, dataset, split, ids, labels, preds, masks, pooled):
    y, p, m = np.concatenate(labels), np.concatenate(preds), np.concatenate(masks)
    met = compute_metrics(y, p, m, pooled=pooled)
    return MetricsReport(name, dataset.problem, _subset_label(dataset, ids), split,
                         {k: met[k] for k in METRICS}, int(y.shape[0]), met["flagged"])


class IdentityStepper(Model):
    """Field-style stand-in whose next frame is its input frame; lets rollouts score the baseline."""

    kind = "identity"

    def __init__(self, omega_dim: int, grid=(64, 64)):
        super().__init__(ModelSpec("ResNet", omega_dim, grid=tuple(grid)), 0, np.float64)

    def forward(self, field):
        return Tensor(np.asarray(field)[:, :2])


def eval_identity(dataset, split="test", subset=None, pooled=False) -> MetricsReport:
    """Metrics of predicting u(t) := u(t − Δt) over every consecutive pair."""
    ids = _select(dataset, split, subset)
    labels, preds, masks = [], [], []
    for cid in ids:
        f = dataset.frames(cid)
        labels.append(f[1:])
        preds.append(f[:-1])
        masks.append(np.broadcast_to(dataset.mask(cid), (f.shape[0] - 1,) + f.shape[-2:]))
    return _report("identity", dataset, split, ids, labels, preds, masks, pooled)


def _next_fields(model, dataset, cid, inputs):
    mask = dataset.mask(cid)
    out = predict_next_field(model, inputs.astype(model.dtype), mask, dataset.omega(cid))
    return out.astype(np.float64) * mask


def evaluate(model, dataset, split="test", subset=None, pooled=False, workers=1) -> MetricsReport:
    """Single-step metrics: autoregressive kinds see the true previous frame, query kinds are queried at t."""
    ids = _select(dataset, split, subset)

    def one(cid):
        f = dataset.frames(cid)
        if model.spec.autoregressive:
            pred = _next_fields(model, dataset, cid, f[:-1])
        else:
            t_last = f.shape[0] - 1
            pred = np.stack([predict_frame_at(model, dataset.omega(cid), t / t_last, f.shape[-2:])
                             for t in range(1, f.shape[0])])
        return f[1:], pred, np.broadcast_to(dataset.mask(cid), (f.shape[0] - 1,) + f.shape[-2:])

    with inference_mode(model):
        results = _map(one, ids, workers)
    labels, preds, masks = zip(*results)
    return _report(model.kind, dataset, split, ids, labels, preds, masks, pooled)


def rollout(model, dataset, case_id, steps: int | None = None) -> RolloutCurve:
    """Per-step metrics from the initial frame.

    Autoregressive kinds feed their own (mask-zeroed) prediction back in;
    query kinds are evaluated directly at each step's time.
    """
    f = dataset.frames(case_id)
    available = f.shape[0] - 1
    if steps is None:
        steps = available
    if steps > available:
        warnings.warn(f"{case_id} has {available} labelled steps; truncating rollout from {steps}", RuntimeWarning,
                      stacklevel=2)
        steps = available
    mask = dataset.mask(case_id)
    preds = []
    with inference_mode(model):
        if model.spec.autoregressive:
            x = f[0:1]
            for _ in range(steps):
                x = _next_fields(model, dataset, case_id, x)
                preds.append(x[0])
        else:
            for s in range(1, steps + 1):
                preds.append(predict_frame_at(model, dataset.omega(case_id), s / available, f.shape[-2:]))
    curve = RolloutCurve(model.kind, dataset.problem, case_id, list(range(1, steps + 1)),
                         subset=dataset.records[case_id].meta.subset)
    if steps:
        mse, nmse, mae, _ = frame_metrics(f[1:steps + 1], np.stack(preds), mask)
    else:
        mse = nmse = mae = np.zeros(0)
    curve.metrics = {"MSE": mse.tolist(), "NMSE": nmse.tolist(), "MAE": mae.tolist()}
    return curve


def mean_curve(curves, name=None) -> RolloutCurve:
    """Average per-step metrics over cases (curves truncated to the shortest)."""
    curves = list(curves)
    if not curves:
        raise EmptyInputError("no rollout curves to average")
    n = min(len(c.steps) for c in curves)
    out = RolloutCurve(name or curves[0].model, curves[0].problem, "mean", list(range(1, n + 1)),
                       subset=curves[0].subset)
    out.metrics = {m: np.mean([c.metrics[m][:n] for c in curves], axis=0).tolist() for m in METRICS}
    return out


def rollout_many(model, dataset, case_ids, steps=None, workers=1):
    return _map(lambda cid: rollout(model, dataset, cid, steps), case_ids, workers)


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
