"""Wall-clock and memory cost of a model at the benchmark's batch sizes."""
from __future__ import annotations

import time
import tracemalloc
from dataclasses import asdict, dataclass

import numpy as np

from .. import diffmath as dm
from ..operators import ModelInput, image_stack, model_input_for, predict, spacetime_queries
from ..trainer.objective import nmse_loss


@dataclass
class CostProfile:
    model: str
    params: int
    train_step_s: float
    train_epoch_s: float
    peak_train_mb: float
    latency_s: float
    train_batch: int
    infer_batch: int

    def to_dict(self):
        return asdict(self)


def _example(model, velocity, mask, omega, batch, k):
    """A synthetic batch in the model's input style, built from one sample frame."""
    v = np.broadcast_to(np.asarray(velocity, dtype=model.dtype), (batch,) + np.shape(velocity)[-3:])
    h, w = v.shape[-2:]
    m = np.broadcast_to(mask, (batch, h, w))
    om = np.broadcast_to(np.asarray(omega, dtype=model.dtype), (batch, len(omega)))
    spec = model.spec
    if spec.style == "field":
        return ModelInput(field=image_stack(v, m, om).astype(model.dtype)), v.copy()
    k = min(k, h * w)
    if spec.style == "query":
        q = spacetime_queries((h, w), 0.5)[:k].astype(model.dtype)
        if spec.kind == "FFN":
            return (ModelInput(query=np.tile(q, (batch, 1)), omega=np.repeat(om, k, axis=0)),
                    np.zeros((batch * k, spec.out_dim), model.dtype))
        return ModelInput(query=np.broadcast_to(q, (batch, k, 3)), omega=om), np.zeros((batch, k, spec.out_dim))
    inp = model_input_for(spec, v, m, om)
    inp.query = inp.query[:, :k].astype(model.dtype)
    return inp, np.zeros((batch, k, spec.out_dim), model.dtype)


def _median_time(fn, iters, warmup):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(iters):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def profile(model, velocity, mask, omega, n_train_examples=1, train_batch=32, infer_batch=1, iters=20, warmup=2,
            k_queries=1000) -> CostProfile:
    """Median step time (forward, backward, Adam) at ``train_batch`` and inference latency at ``infer_batch``.

    Weights and optimizer effects are rolled back, so the profiled model is unchanged.
    """
    snapshot = model.state_arrays()
    was_training = model.training
    params = model.parameters()
    opt = dm.AdamState.for_params(params, lr=1e-12)
    train_inp, target = _example(model, velocity, mask, omega, train_batch, k_queries)
    infer_inp, _ = _example(model, velocity, mask, omega, infer_batch, k_queries)

    def step():
        model.zero_grad()
        with dm.Tape() as tape:
            loss = nmse_loss(predict(model, train_inp, grad=True), target + 1.0)
            tape.backward(loss)
        dm.adam_step(params, [p.grad for p in params], opt)

    try:
        model.train()
        step_s = _median_time(step, iters, warmup)
        tracemalloc.start()
        step()
        peak = tracemalloc.get_traced_memory()[1]
        tracemalloc.stop()
        model.eval()
        latency = _median_time(lambda: predict(model, infer_inp), iters, warmup)
    finally:
        if tracemalloc.is_tracing():
            tracemalloc.stop()
        model.zero_grad()
        model.load_state_arrays(snapshot)
        model.train(was_training)
    batches = max(1, -(-n_train_examples // train_batch))
    return CostProfile(model.kind, model.count_params(), step_s, step_s * batches, peak / 2 ** 20, latency,
                       train_batch, infer_batch)
