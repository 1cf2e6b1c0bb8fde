"""Uniform input container, dispatch, and helpers that build inputs from gridded frames."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffmath as dm
from ..errors import ContractError, InputError
from .spec import ModelSpec


@dataclass
class ModelInput:
    """One of four shapes, all batched along the leading axis.

    query:        query [B, K, 3] (x, y, t) + omega [B, P]
    sampled:      u_sample [B, S] + omega [B, P] + query [B, K, 2]
    field_query:  field [B, C, H, W] + query [B, K, 2]
    field:        field [B, C, H, W]
    """

    field: np.ndarray | None = None
    query: np.ndarray | None = None
    omega: np.ndarray | None = None
    u_sample: np.ndarray | None = None

    @property
    def style(self) -> str:
        if self.field is not None:
            return "field_query" if self.query is not None else "field"
        if self.u_sample is not None:
            return "sampled"
        if self.query is not None:
            return "query"
        raise InputError("empty model input")

    def __len__(self):
        for a in (self.field, self.u_sample, self.query):
            if a is not None:
                return len(a)
        return 0


def _rescaled(inp: ModelInput, scale: float) -> ModelInput:
    """Velocity entries (field channels 0-1 and u_sample) divided by ``scale``."""
    field = None
    if inp.field is not None:
        field = np.array(inp.field, copy=True)
        field[:, :2] = field[:, :2] / scale
    u_sample = None if inp.u_sample is None else np.asarray(inp.u_sample) / scale
    return ModelInput(field=field, query=inp.query, omega=inp.omega, u_sample=u_sample)


def predict(model, inp: ModelInput, grad: bool = False):
    """Dispatch ``inp`` to ``model``'s forward; returns an ndarray (or a Tensor when ``grad``).

    Velocities are divided by ``spec.field_scale`` on the way in and outputs
    multiplied by it on the way out, so callers always work in physical units.
    """
    style = inp.style
    if style != model.spec.style:
        raise ContractError(f"{model.kind} takes {model.spec.style}-style input, got {style}-style input")
    scale = model.spec.field_scale
    if scale != 1.0:
        inp = _rescaled(inp, scale)
    if style == "query":
        call = lambda: model(inp.query, inp.omega)
    elif style == "sampled":
        call = lambda: model(inp.u_sample, inp.omega, inp.query)
    elif style == "field_query":
        call = lambda: model(inp.field, inp.query)
    else:
        call = lambda: model(inp.field)
    if grad:
        out = call()
        return out if scale == 1.0 else out * scale
    with dm.no_grad():
        out = call().data
    return out if scale == 1.0 else out * scale


def unit_coordinates(shape) -> np.ndarray:
    """[H*W, 2] cell-centre (x, y) in the unit square, row-major over (row=y, col=x)."""
    h, w = shape
    y = (np.arange(h) + 0.5) / h
    x = (np.arange(w) + 0.5) / w
    yy, xx = np.meshgrid(y, x, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=-1)


def cell_indices_to_coords(idx, shape) -> np.ndarray:
    """Flat cell indices -> unit-square (x, y)."""
    return unit_coordinates(shape)[np.asarray(idx)]


def sample_lattice(velocity, sample_grid=(32, 32)) -> np.ndarray:
    """Fixed uniform sub-lattice of a [B, 2, H, W] field, flattened per channel -> [B, 2*sh*sw]."""
    v = np.asarray(velocity)
    if v.ndim != 4 or v.shape[1] != 2:
        raise InputError(f"expected [B, 2, H, W] velocities, got {v.shape}")
    h, w = v.shape[-2:]
    sh, sw = sample_grid
    if sh > h or sw > w:
        raise InputError(f"sample lattice {sample_grid} is finer than the grid {(h, w)}")
    rows = np.arange(sh) * h // sh
    cols = np.arange(sw) * w // sw
    return v[:, :, rows][:, :, :, cols].reshape(v.shape[0], -1)


def image_stack(velocity, mask, omega) -> np.ndarray:
    """[B, 2, H, W] + [B, H, W] + [B, P] -> [B, 3 + P, H, W] ordered (u, v, mask, Ω...)."""
    v = np.asarray(velocity)
    b, _, h, w = v.shape
    m = np.broadcast_to(np.asarray(mask, dtype=v.dtype), (b, h, w))
    om = np.broadcast_to(np.asarray(omega, dtype=v.dtype), (b, np.shape(omega)[-1]))
    planes = np.broadcast_to(om[:, :, None, None], (b, om.shape[1], h, w))
    return np.concatenate([v, m[:, None], planes], axis=1)


def model_input_for(spec: ModelSpec, velocity, mask, omega, query=None) -> ModelInput:
    """Build the input an autoregressive model needs from the previous frame.

    ``query`` defaults to every cell centre, so point-style outputs can be
    reshaped back onto the grid.
    """
    v = np.asarray(velocity)
    if spec.style == "field":
        return ModelInput(field=image_stack(v, mask, omega))
    b = v.shape[0]
    if query is None:
        query = np.broadcast_to(unit_coordinates(v.shape[-2:]), (b,) + (v.shape[-2] * v.shape[-1], 2))
    if spec.style == "field_query":
        return ModelInput(field=image_stack(v, mask, omega), query=np.asarray(query))
    if spec.style == "sampled":
        om = np.broadcast_to(np.asarray(omega), (b, spec.omega_dim))
        return ModelInput(u_sample=sample_lattice(v, spec.hyper["sample_grid"]), omega=om, query=np.asarray(query))
    raise ContractError(f"{spec.kind} is not autoregressive; build (x, y, t) queries instead")


def predict_next_field(model, velocity, mask, omega, chunk: int = 4) -> np.ndarray:
    """Next [B, out, H, W] field for any autoregressive model, evaluated in chunks of samples."""
    v = np.asarray(velocity)
    h, w = v.shape[-2:]
    om = np.broadcast_to(np.asarray(omega), (v.shape[0], np.shape(omega)[-1]))
    m = np.broadcast_to(np.asarray(mask), (v.shape[0], h, w))
    outs = []
    for s in range(0, v.shape[0], chunk):
        inp = model_input_for(model.spec, v[s:s + chunk], m[s:s + chunk], om[s:s + chunk])
        y = predict(model, inp)
        if model.spec.style != "field":
            y = y.reshape(y.shape[0], h, w, -1).transpose(0, 3, 1, 2)
        outs.append(y)
    return np.concatenate(outs, axis=0)


def spacetime_queries(shape, t_unit) -> np.ndarray:
    """[H*W, 3] (x, y, t) queries at a single normalized time."""
    xy = unit_coordinates(shape)
    return np.concatenate([xy, np.full((len(xy), 1), t_unit)], axis=-1)


def predict_frame_at(model, omega, t_unit, shape) -> np.ndarray:
    """Full [out, H, W] field from a query-style model at normalized time ``t_unit``."""
    q = spacetime_queries(shape, t_unit)
    if model.kind == "FFN":
        y = predict(model, ModelInput(query=q, omega=np.asarray(omega)))
    else:
        y = predict(model, ModelInput(query=q[None], omega=np.asarray(omega)[None]))[0]
    return y.reshape(shape[0], shape[1], -1).transpose(2, 0, 1)
