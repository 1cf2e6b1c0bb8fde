"""The nine baseline architectures.

Query-style models map coordinates plus Ω to per-point velocities; image-style
models map a [C_in, H, W] field stack (u, v, mask, Ω channels) to the next
[out, H, W] field.
"""
from __future__ import annotations

import warnings

import numpy as np

from .. import diffmath as dm
from ..diffmath import Tensor
from ..errors import ConfigurationError, InputError
from .layers import MLP, Conv2d, DoubleConv, Linear, Module, ModuleList, SpectralConv2d, UpConv2x2, zeros
from .spec import ModelSpec

OMEGA_WARN_RANGE = (-1.0, 2.0)


def _as_batch(a, trailing: int):
    """Promote an array with ``trailing`` core dims to a batch; report whether it was unbatched."""
    a = np.asarray(a) if not isinstance(a, Tensor) else a
    if a.ndim == trailing:
        return a[None], True
    if a.ndim != trailing + 1:
        raise InputError(f"expected {trailing} or {trailing + 1} dims, got shape {a.shape}")
    return a, False


def _check_omega(omega, dim):
    omega = np.asarray(omega)
    if omega.shape[-1] != dim:
        raise InputError(f"omega has {omega.shape[-1]} entries, model was built for {dim}")
    if omega.size and (omega.min() < OMEGA_WARN_RANGE[0] or omega.max() > OMEGA_WARN_RANGE[1]):
        warnings.warn(f"omega values in [{omega.min():.3g}, {omega.max():.3g}] look unnormalized", RuntimeWarning,
                      stacklevel=3)


def aggregate(branch: Tensor, trunk: Tensor, bias: Tensor, out_dim: int) -> Tensor:
    """Branch [B, out*p] and trunk [B, K, p] -> [B, K, out]: one dot product per output plus bias.

    The branch row is evaluated once per sample and reused across all K queries.
    """
    b = branch.shape[0]
    p = trunk.shape[-1]
    if branch.shape[-1] != out_dim * p:
        raise ConfigurationError(f"branch width {branch.shape[-1]} != out_dim * trunk width {out_dim}*{p}")
    coeff = branch.reshape(b, out_dim, p).transpose(0, 2, 1)
    return dm.matmul(trunk, coeff) + bias


class Model(Module):
    def __init__(self, spec: ModelSpec, seed: int, dtype=np.float32):
        super().__init__()
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "dtype", np.dtype(dtype))

    @property
    def kind(self):
        return self.spec.kind


class _BranchTrunk(Model):
    def _width(self, h):
        bw, tw = h.get("branch_width", h["width"]), h.get("trunk_width", h["width"])
        if bw != tw:
            raise ConfigurationError(f"branch width {bw} and trunk width {tw} must match")
        return bw

    def _mlp(self, n_in, depth, width, n_out, rng, dtype):
        h = self.spec.hyper
        return MLP([n_in] + [width] * (depth - 1) + [n_out], rng, h["activation"], h["pre_normalize"], dtype)


# ---------------------------------------------------------------------------
# query-style (non-autoregressive)


class FFN(Model):
    """MLP on Ω || (x, y, t)."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        sizes = [spec.omega_dim + 3] + [h["width"]] * (h["depth"] - 1) + [spec.out_dim]
        self.net = MLP(sizes, rng, h["activation"], h["pre_normalize"], dtype)

    def forward(self, query, omega):
        """``query`` [N, 3] or [3]; ``omega`` [N, P] or [P] -> [N, out] or [out]."""
        q = np.asarray(query)
        single = q.ndim == 1
        q = q[None] if single else q
        _check_omega(omega, self.spec.omega_dim)
        om = np.broadcast_to(np.asarray(omega, dtype=q.dtype), (q.shape[0], self.spec.omega_dim))
        x = np.concatenate([om, q], axis=-1).astype(self.dtype, copy=False)
        y = self.net(Tensor(x))
        return y[0] if single else y


class DeepONet(_BranchTrunk):
    """Branch on Ω, trunk on (x, y, t), dot product plus bias."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        p = self._width(h)
        self.branch = self._mlp(spec.omega_dim, h["branch_depth"], p, p * spec.out_dim, rng, dtype)
        self.trunk = self._mlp(3, h["trunk_depth"], p, p, rng, dtype)
        self.bias = zeros(spec.out_dim, dtype)

    def forward(self, query, omega):
        """``query`` [B, K, 3] or [K, 3]; ``omega`` [B, P] or [P] -> [B, K, out] or [K, out]."""
        q, single = _as_batch(query, 2)
        om, _ = _as_batch(omega, 1)
        _check_omega(om, self.spec.omega_dim)
        dt = self.dtype
        out = aggregate(self.branch(Tensor(om.astype(dt))), self.trunk(Tensor(q.astype(dt))), self.bias,
                        self.spec.out_dim)
        return out[0] if single else out

    def forward_naive(self, query, omega):
        """Reference path: the branch is re-evaluated for every query point."""
        q, single = _as_batch(query, 2)
        om, _ = _as_batch(omega, 1)
        b, k, _ = q.shape
        dt = self.dtype
        rep = np.repeat(om, k, axis=0).astype(dt)
        br = self.branch(Tensor(rep)).reshape(b * k, self.spec.out_dim, -1)
        tr = self.trunk(Tensor(q.reshape(b * k, 3).astype(dt)))
        out = (br * tr.reshape(b * k, 1, -1)).sum(axis=-1).reshape(b, k, self.spec.out_dim) + self.bias
        return out[0] if single else out


# ---------------------------------------------------------------------------
# sampled-field autoregressive models


class _Sampled(_BranchTrunk):
    @property
    def sample_length(self):
        sh, sw = self.spec.hyper["sample_grid"]
        return 2 * sh * sw

    def _inputs(self, u_sample, omega, query):
        us, single = _as_batch(u_sample, 1)
        if us.shape[-1] != self.sample_length:
            raise InputError(f"u_sample has length {us.shape[-1]}, model expects {self.sample_length}")
        om, _ = _as_batch(omega, 1)
        _check_omega(om, self.spec.omega_dim)
        q, _ = _as_batch(query, 2)
        if q.shape[-1] != 2:
            raise InputError(f"queries must be (x, y) pairs, got trailing size {q.shape[-1]}")
        if not (us.shape[0] == om.shape[0] == q.shape[0]):
            raise InputError(f"batch sizes differ: u_sample {us.shape[0]}, omega {om.shape[0]}, query {q.shape[0]}")
        dt = self.dtype
        return us.astype(dt), om.astype(dt), q.astype(dt), single


class AutoFFN(_Sampled):
    """MLP on u_sample || Ω || (x, y)."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        n_in = self.sample_length + spec.omega_dim + 2
        self.net = MLP([n_in] + [h["width"]] * (h["depth"] - 1) + [spec.out_dim], rng, h["activation"],
                       h["pre_normalize"], dtype)

    def forward(self, u_sample, omega, query):
        us, om, q, single = self._inputs(u_sample, omega, query)
        b, k, _ = q.shape
        cond = np.concatenate([us, om], axis=-1)
        x = np.concatenate([np.repeat(cond[:, None], k, axis=1), q], axis=-1)
        out = self.net(Tensor(x))
        return out[0] if single else out


class AutoDeepONet(_Sampled):
    """Branch on u_sample || Ω, trunk on (x, y)."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        p = self._width(h)
        self.branch = self._mlp(self.sample_length + spec.omega_dim, h["branch_depth"], p, p * spec.out_dim, rng,
                                dtype)
        self.trunk = self._mlp(2, h["trunk_depth"], p, p, rng, dtype)
        self.bias = zeros(spec.out_dim, dtype)

    def forward(self, u_sample, omega, query):
        us, om, q, single = self._inputs(u_sample, omega, query)
        out = aggregate(self.branch(Tensor(np.concatenate([us, om], axis=-1))), self.trunk(Tensor(q)), self.bias,
                        self.spec.out_dim)
        return out[0] if single else out

    def forward_naive(self, u_sample, omega, query):
        us, om, q, single = self._inputs(u_sample, omega, query)
        b, k, _ = q.shape
        cond = np.repeat(np.concatenate([us, om], axis=-1), k, axis=0)
        br = self.branch(Tensor(cond)).reshape(b * k, self.spec.out_dim, -1)
        tr = self.trunk(Tensor(q.reshape(b * k, 2)))
        out = (br * tr.reshape(b * k, 1, -1)).sum(axis=-1).reshape(b, k, self.spec.out_dim) + self.bias
        return out[0] if single else out


class AutoEDeepONet(_Sampled):
    """Two branches, on u_sample and on Ω, merged by element-wise product before the trunk dot product."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        p = self._width(h)
        self.branch_u = self._mlp(self.sample_length, h["branch_depth"], p, p * spec.out_dim, rng, dtype)
        self.branch_omega = self._mlp(max(spec.omega_dim, 1), h["branch_depth"], p, p * spec.out_dim, rng, dtype)
        self.trunk = self._mlp(2, h["trunk_depth"], p, p, rng, dtype)
        self.bias = zeros(spec.out_dim, dtype)

    def _omega_in(self, om):
        # a model without operating parameters feeds the Ω branch a constant
        return om if om.shape[-1] else np.ones((om.shape[0], 1), dtype=om.dtype)

    def forward(self, u_sample, omega, query):
        us, om, q, single = self._inputs(u_sample, omega, query)
        merged = self.branch_u(Tensor(us)) * self.branch_omega(Tensor(self._omega_in(om)))
        out = aggregate(merged, self.trunk(Tensor(q)), self.bias, self.spec.out_dim)
        return out[0] if single else out

    def forward_naive(self, u_sample, omega, query):
        us, om, q, single = self._inputs(u_sample, omega, query)
        b, k, _ = q.shape
        bu = self.branch_u(Tensor(np.repeat(us, k, axis=0)))
        bo = self.branch_omega(Tensor(np.repeat(self._omega_in(om), k, axis=0)))
        br = (bu * bo).reshape(b * k, self.spec.out_dim, -1)
        tr = self.trunk(Tensor(q.reshape(b * k, 2)))
        out = (br * tr.reshape(b * k, 1, -1)).sum(axis=-1).reshape(b, k, self.spec.out_dim) + self.bias
        return out[0] if single else out


# ---------------------------------------------------------------------------
# field-input models


def _check_field(model, x, check_grid=False):
    xb, single = _as_batch(x, 3)
    if xb.shape[1] != model.spec.in_channels:
        raise InputError(f"{model.kind} expects {model.spec.in_channels} input channels, got {xb.shape[1]}")
    if check_grid and tuple(xb.shape[-2:]) != model.spec.grid:
        raise InputError(f"{model.kind} was built for a {model.spec.grid} grid, got {tuple(xb.shape[-2:])}")
    return xb, single


class AutoDeepONetCNN(_BranchTrunk):
    """Convolutional branch over the full previous field, MLP trunk on (x, y)."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        p = self._width(h)
        chans = (spec.in_channels,) + h["channels"]
        n_pool = len(h["channels"])
        gh, gw = spec.grid
        if gh % 2 ** n_pool or gw % 2 ** n_pool:
            raise ConfigurationError(f"grid {spec.grid} is not divisible by 2^{n_pool}")
        self.convs = ModuleList(Conv2d(a, b, 3, rng, dtype) for a, b in zip(chans[:-1], chans[1:]))
        flat = chans[-1] * (gh // 2 ** n_pool) * (gw // 2 ** n_pool)
        self.head = Linear(flat, p * spec.out_dim, rng, dtype)
        self.trunk = self._mlp(2, h["trunk_depth"], p, p, rng, dtype)
        self.bias = zeros(spec.out_dim, dtype)

    def branch(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = dm.max_pool2d(dm.relu(conv(x)))
        return self.head(x.reshape(x.shape[0], -1))

    def forward(self, field, query):
        """``field`` [B, C, H, W]; ``query`` [B, K, 2] -> [B, K, out]."""
        x, single = _check_field(self, field, check_grid=True)
        q, _ = _as_batch(query, 2)
        dt = self.dtype
        out = aggregate(self.branch(Tensor(x.astype(dt))), self.trunk(Tensor(q.astype(dt))), self.bias,
                        self.spec.out_dim)
        return out[0] if single else out


class _ResidualCNN(Module):
    def __init__(self, ch, k, rng, dtype):
        super().__init__()
        self.conv1 = Conv2d(ch, ch, k, rng, dtype)
        self.conv2 = Conv2d(ch, ch, k, rng, dtype)

    def forward(self, x):
        return self.conv2(dm.relu(self.conv1(x)))


class ResNet(Model):
    """f_out(B_d(...B_1(f_in(x)))) with B_i(x) = x + CNN_i(x)."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        ch, k = h["hidden"], h["kernel"]
        if k % 2 == 0:
            raise ConfigurationError(f"ResNet kernel must be odd to preserve shape, got {k}")
        self.f_in = Conv2d(spec.in_channels, ch, k, rng, dtype)
        self.blocks = ModuleList(_ResidualCNN(ch, k, rng, dtype) for _ in range(h["depth"]))
        self.f_out = Conv2d(ch, spec.out_dim, k, rng, dtype)

    def forward(self, field):
        x, single = _check_field(self, field)
        x = self.f_in(Tensor(x.astype(self.dtype)))
        for block in self.blocks:
            x = x + block(x)
        out = self.f_out(x)
        return out[0] if single else out


class UNet(Model):
    """Encoder-decoder with a skip concatenation at every level."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        chans = [h["base"] * 2 ** i for i in range(h["levels"] + 1)]
        self.f_in = DoubleConv(spec.in_channels, chans[0], rng, dtype)
        self.down = ModuleList(DoubleConv(a, b, rng, dtype) for a, b in zip(chans[:-1], chans[1:]))
        ups, decs = [], []
        for c_hi, c_lo in zip(chans[:0:-1], chans[-2::-1]):
            ups.append(UpConv2x2(c_hi, c_lo, rng, dtype))
            decs.append(DoubleConv(2 * c_lo, c_lo, rng, dtype))
        self.up = ModuleList(ups)
        self.dec = ModuleList(decs)
        self.f_out = Conv2d(chans[0], spec.out_dim, 1, rng, dtype)

    def forward(self, field):
        x, single = _check_field(self, field)
        f = 2 ** self.spec.hyper["levels"]
        if x.shape[-2] % f or x.shape[-1] % f:
            raise ConfigurationError(f"U-Net with {self.spec.hyper['levels']} levels needs H, W divisible by {f}, "
                                     f"got {x.shape[-2:]}")
        h = self.f_in(Tensor(x.astype(self.dtype)))
        skips = [h]
        for block in self.down:
            h = block(dm.max_pool2d(h))
            skips.append(h)
        skips.pop()
        for up, dec in zip(self.up, self.dec):
            h = dec(dm.concat([skips.pop(), up(h)], axis=1))
        out = self.f_out(h)
        return out[0] if single else out


class FNOBlock(Module):
    """h + σ(F⁻¹[R · F h] + W h); zero R and W give the identity."""

    def __init__(self, ch, modes, activation, rng, dtype):
        super().__init__()
        self.spectral = SpectralConv2d(ch, ch, modes, rng, dtype)
        self.pointwise = Conv2d(ch, ch, 1, rng, dtype)
        self.activation = activation

    def forward(self, h):
        return h + dm.activation(self.spectral(h) + self.pointwise(h), self.activation)


class FNO(Model):
    """Lift P, Fourier blocks, project Q (two pointwise layers)."""

    def __init__(self, spec, seed, dtype=np.float32):
        super().__init__(spec, seed, dtype)
        h = spec.hyper
        rng = np.random.default_rng(seed)
        dm.spectral_modes(h["modes"], *spec.grid)
        ch = h["hidden"]
        self.lift = Conv2d(spec.in_channels, ch, 1, rng, dtype)
        self.blocks = ModuleList(FNOBlock(ch, h["modes"], h["activation"], rng, dtype) for _ in range(h["depth"]))
        self.proj1 = Conv2d(ch, h["proj"], 1, rng, dtype)
        self.proj2 = Conv2d(h["proj"], spec.out_dim, 1, rng, dtype)

    def forward(self, field):
        x, single = _check_field(self, field)
        h = self.lift(Tensor(x.astype(self.dtype)))
        for block in self.blocks:
            h = block(h)
        out = self.proj2(dm.activation(self.proj1(h), self.spec.hyper["activation"]))
        return out[0] if single else out


MODEL_CLASSES = {cls.__name__: cls for cls in
                 (FFN, DeepONet, AutoFFN, AutoDeepONet, AutoEDeepONet, AutoDeepONetCNN, ResNet, UNet, FNO)}


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Instantiate ``spec`` with seeded uniform fan-in initialization."""
    return MODEL_CLASSES[spec.kind](spec, seed, dtype)
