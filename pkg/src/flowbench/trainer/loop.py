"""Epoch loop for both model families with best-validation selection."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import diffmath as dm
from ..errors import ConfigurationError, EmptyInputError, TrainingDivergedError
from ..operators import ModelInput, image_stack, model_input_for, predict, save_checkpoint
from .objective import nmse_loss, lr_at_epoch, sample_queries

log = logging.getLogger(__name__)

# base learning rates per kind, from a small grid search on a cavity PROP toy set (scripts/tune_lr.py)
TUNED_LR = {
    "FFN": 1e-3, "DeepONet": 3e-4, "AutoFFN": 1e-4, "AutoDeepONet": 3e-4, "AutoEDeepONet": 3e-3,
    "AutoDeepONetCNN": 3e-3, "ResNet": 3e-3, "UNet": 3e-3, "FNO": 1e-2,
}


@dataclass
class TrainConfig:
    lr: float | None = None
    epochs: int = 100
    batch_size: int = 32
    decay: float = 0.9
    decay_period: int = 20
    k_queries: int = 1000
    seed: int = 0
    precision: str = "float32"
    patience: int = 30
    max_batches: int | None = None  # per epoch; None runs every batch

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ConfigurationError(f"decay must be in (0, 1], got {self.decay}")
        if self.k_queries < 1 or self.batch_size < 1 or self.decay_period < 1:
            raise ConfigurationError("k_queries, batch_size and decay_period must be >= 1")
        if self.epochs < 0 or self.patience < 1:
            raise ConfigurationError("epochs must be >= 0 and patience >= 1")
        if self.lr is not None and not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError(f"precision must be float32 or float64, got {self.precision!r}")

    def base_lr(self, kind: str) -> float:
        return self.lr if self.lr is not None else TUNED_LR[kind]

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainState:
    epoch: int = 0
    history: list = field(default_factory=list)  # dicts: epoch, train_nmse, val_nmse, lr
    best_epoch: int | None = None
    best_val: float = float("inf")
    best_checkpoint: Path | None = None
    stopped_early: bool = False
    seconds: float = 0.0


class ExampleSource:
    """Training examples for one split.

    Autoregressive kinds use consecutive frame pairs; query kinds use frames at
    every labelled time. Point-output kinds draw ``k`` fluid-cell queries per
    example.
    """

    def __init__(self, spec, dataset, split, k):
        self.spec = spec
        self.dataset = dataset
        self.split = split
        self.ids = dataset.ids(split)
        if not self.ids:
            raise EmptyInputError(f"split {split!r} has no cases")
        if spec.autoregressive:
            self.rows = dataset.pair_index(split)
        else:
            self.rows = np.array([(i, t) for i, cid in enumerate(self.ids)
                                  for t in range(dataset.frames(cid).shape[0])], dtype=np.int64).reshape(-1, 2)
        h, w = dataset.grid_shape
        self.k = min(k, h * w)

    def __len__(self):
        return len(self.rows)

    def batch(self, rows, rng):
        """(ModelInput, target, weight) for the given rows."""
        ds, spec = self.dataset, self.spec
        if spec.autoregressive:
            x, y, omega, mask = ds.gather_pairs(self.split, rows)
            if spec.style == "field":
                return ModelInput(field=image_stack(x, mask, omega)), y, mask[:, None]
            samples = [sample_queries(y[j], self._k(mask[j]), mask=mask[j], rng=rng) for j in range(len(rows))]
            q = np.stack([s.coords for s in samples])
            target = np.stack([s.values for s in samples])
            return model_input_for(spec, x, mask, omega, query=q), target, None
        qs, targets, omegas = [], [], []
        for i, t in rows:
            cid = self.ids[i]
            frames = ds.frames(cid)
            mask = ds.mask(cid)
            s = sample_queries(frames[t], self._k(mask), mask=mask, rng=rng)
            t_unit = t / max(frames.shape[0] - 1, 1)
            qs.append(np.concatenate([s.coords, np.full((len(s.index), 1), t_unit)], axis=-1))
            targets.append(s.values)
            omegas.append(ds.omega(cid))
        q, target, omega = np.stack(qs), np.stack(targets), np.stack(omegas)
        if spec.kind == "FFN":
            kq = q.shape[1]
            return (ModelInput(query=q.reshape(-1, 3), omega=np.repeat(omega, kq, axis=0)),
                    target.reshape(-1, target.shape[-1]), None)
        return ModelInput(query=q, omega=omega), target, None

    def _k(self, mask):
        return min(self.k, int(np.count_nonzero(mask)))


def _cast(inp: ModelInput, dtype):
    return ModelInput(**{k: None if v is None else np.asarray(v, dtype=dtype) for k, v in vars(inp).items()})


def evaluate_nmse(model, source: ExampleSource, batch_size: int, seed: int) -> float:
    """Pooled NMSE over a split with a fixed query draw, in inference mode."""
    was_training = model.training
    model.eval()
    rng = np.random.default_rng([seed, 7919])
    num = den = 0.0
    try:
        for s in range(0, len(source), batch_size):
            inp, y, w = source.batch(source.rows[s:s + batch_size], rng)
            pred = predict(model, _cast(inp, model.dtype)).astype(np.float64)
            w = 1.0 if w is None else w
            num += float(np.sum(((pred - y) * w) ** 2))
            den += float(np.sum((y * w) ** 2))
    finally:
        model.train(was_training)
    return num / max(den, 1e-12)


def train(model, dataset, config: TrainConfig, run_dir=None):
    """Adam with step decay; returns the model at its best validation epoch and the run state."""
    state = TrainState()
    run_dir = Path(run_dir) if run_dir is not None else None
    base = config.base_lr(model.kind)
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        cfg = dict(config.to_dict(), resolved_lr=base, model=model.spec.to_json(), model_seed=model.seed)
        (run_dir / "config.json").write_text(json.dumps(cfg, indent=1))
    if config.epochs == 0:
        return model, state

    params = model.parameters()
    opt = dm.AdamState.for_params(params, lr=base)
    train_src = ExampleSource(model.spec, dataset, "train", config.k_queries)
    val_src = ExampleSource(model.spec, dataset, "val", config.k_queries) if dataset.ids("val") else None
    best_arrays = model.state_arrays()
    start = time.perf_counter()
    for epoch in range(config.epochs):
        lr = lr_at_epoch(base, epoch, config.decay, config.decay_period)
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train_src))
        model.train()
        losses = []
        for b, s in enumerate(range(0, len(order), config.batch_size)):
            if config.max_batches is not None and b >= config.max_batches:
                break
            inp, y, w = train_src.batch(train_src.rows[order[s:s + config.batch_size]], rng)
            model.zero_grad()
            with dm.Tape() as tape:
                loss = nmse_loss(predict(model, _cast(inp, model.dtype), grad=True), y, w)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDivergedError(epoch, b, lr)
                tape.backward(loss)
            dm.adam_step(params, [p.grad for p in params], opt, lr)
            losses.append(value)
        train_nmse = float(np.mean(losses))
        val_nmse = evaluate_nmse(model, val_src, config.batch_size, config.seed) if val_src else train_nmse
        if not np.isfinite(val_nmse):
            raise TrainingDivergedError(epoch, "validation", lr)
        state.history.append(dict(epoch=epoch, train_nmse=train_nmse, val_nmse=val_nmse, lr=lr))
        state.epoch = epoch + 1
        log.info("epoch %d  train %.4e  val %.4e  lr %.2e", epoch, train_nmse, val_nmse, lr)
        if val_nmse < state.best_val:
            state.best_val, state.best_epoch = val_nmse, epoch
            best_arrays = model.state_arrays()
        elif epoch - state.best_epoch >= config.patience:
            state.stopped_early = True
            break
    state.seconds = time.perf_counter() - start
    model.load_state_arrays(best_arrays)
    if run_dir is not None:
        write_history(state.history, run_dir / "history.csv")
        state.best_checkpoint = save_checkpoint(model, run_dir / "checkpoint")
    return model, state


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_nmse", "val_nmse", "lr"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)
