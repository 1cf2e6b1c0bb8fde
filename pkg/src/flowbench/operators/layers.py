"""Parameter containers and the layer types shared by the baseline zoo."""
from __future__ import annotations

import numpy as np

from .. import diffmath as dm
from ..diffmath import Tensor


class Module:
    """Tree of named parameters, buffers and sub-modules in declaration order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(f"{prefix}{name}.")

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for m in self._modules.values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def count_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, b in self.named_buffers():
            b[...] = b  # buffers are cast in place by their owners below
        for m in self._iter_modules():
            for name, b in list(m._buffers.items()):
                m.register_buffer(name, b.astype(dtype))
        return self

    def _iter_modules(self):
        yield self
        for m in self._modules.values():
            yield from m._iter_modules()

    def state_arrays(self):
        """Copies of all parameters and buffers, keyed by dotted name."""
        out = {n: p.data.copy() for n, p in self.named_parameters()}
        out.update({n: b.copy() for n, b in self.named_buffers()})
        return out

    def load_state_arrays(self, arrays):
        for n, p in self.named_parameters():
            p.data[...] = arrays[n]
        for n, b in self.named_buffers():
            b[...] = arrays[n]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, m):
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return dm.parameter(rng.uniform(-bound, bound, shape), dtype=dtype)


def zeros(shape, dtype):
    return dm.parameter(np.zeros(shape), dtype=dtype)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        super().__init__()
        self.weight = he_uniform(rng, (n_in, n_out), n_in, dtype)
        self.bias = zeros(n_out, dtype)

    def forward(self, x):
        return dm.linear(x, self.weight, self.bias)


class MLP(Module):
    """Stack of linear layers; activation after every layer but the last."""

    def __init__(self, sizes, rng, activation="relu", pre_normalize=True, dtype=np.float32):
        super().__init__()
        self.layers = ModuleList(Linear(a, b, rng, dtype) for a, b in zip(sizes[:-1], sizes[1:]))
        self.activation = activation
        self.pre_normalize = pre_normalize

    def forward(self, x):
        n = len(self.layers)
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < n - 1:
                x = dm.activation(x, self.activation, pre_normalize=self.pre_normalize)
        return x


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel_size, rng, dtype=np.float32, bias=True):
        super().__init__()
        self.weight = he_uniform(rng, (c_out, c_in, kernel_size, kernel_size), c_in * kernel_size ** 2, dtype)
        self.bias = zeros(c_out, dtype) if bias else None
        self.padding = kernel_size // 2

    def forward(self, x):
        return dm.conv2d(x, self.weight, self.bias, padding=self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels, dtype=np.float32, momentum=0.1):
        super().__init__()
        self.gamma = dm.parameter(np.ones(channels), dtype=dtype)
        self.beta = zeros(channels, dtype)
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))
        self.momentum = momentum

    def forward(self, x):
        return dm.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             training=self.training, momentum=self.momentum)


class UpConv2x2(Module):
    def __init__(self, c_in, c_out, rng, dtype=np.float32):
        super().__init__()
        self.weight = he_uniform(rng, (c_in, c_out, 2, 2), c_in * 4, dtype)
        self.bias = zeros(c_out, dtype)

    def forward(self, x):
        return dm.upconv2x2(x, self.weight, self.bias)


class SpectralConv2d(Module):
    def __init__(self, c_in, c_out, modes, rng, dtype=np.float32):
        super().__init__()
        mh, mw = (modes, modes) if np.isscalar(modes) else modes
        scale = 1.0 / (c_in * c_out)
        self.weight = dm.parameter(scale * rng.uniform(0.0, 1.0, (c_out, c_in, mh, mw, 2)), dtype=dtype)
        self.modes = (mh, mw)

    def forward(self, x):
        return dm.spectral_conv(x, self.weight, self.modes)


class DoubleConv(Module):
    """(3x3 conv, batch norm, ReLU) twice."""

    def __init__(self, c_in, c_out, rng, dtype=np.float32):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, rng, dtype)
        self.bn1 = BatchNorm2d(c_out, dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, rng, dtype)
        self.bn2 = BatchNorm2d(c_out, dtype)

    def forward(self, x):
        x = dm.relu(self.bn1(self.conv1(x)))
        return dm.relu(self.bn2(self.conv2(x)))
