import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowbench import diffmath as dm
from flowbench.diffmath import Tensor
from flowbench.errors import ConfigurationError, ContainerError, ContractError, InputError
from flowbench.operators import (KINDS, AutoDeepONet, FNOBlock, Model, ModelInput, ModelSpec, aggregate,
                                 build_model, image_stack, load_checkpoint, model_input_for, paper_spec, predict,
                                 predict_next_field, sample_lattice, save_checkpoint, unit_coordinates)

from helpers import check_grad


def spec(kind, omega_dim=5, **kw):
    grid = kw.pop("grid", (16, 16))
    out_dim = kw.pop("out_dim", 2)
    if kind == "FNO":
        kw.setdefault("modes", 4)
    return ModelSpec(kind, omega_dim=omega_dim, out_dim=out_dim, grid=grid, hyper=kw)


def f64(kind, seed=0, **kw):
    return build_model(spec(kind, **kw), seed=seed, dtype=np.float64)


# ---------------------------------------------------------------- parameter accounting

@pytest.mark.parametrize("kind,expected", [("DeepONet", 263_701), ("UNet", 1_095_025), ("FNO", 1_188_545)])
def test_pinned_parameter_counts(kind, expected):
    assert build_model(paper_spec(kind), seed=0).count_params() == expected


@pytest.mark.parametrize("kind,target", [("FFN", 72_000), ("AutoFFN", 1_102_000)])
def test_ffn_sizes_near_cost_table(kind, target):
    n = build_model(ModelSpec(kind, omega_dim=5), seed=0).count_params()
    assert abs(n - target) / target < 0.10


@pytest.mark.parametrize("kind", KINDS)
def test_count_reproducible_and_init_deterministic(kind):
    a = build_model(spec(kind), seed=3)
    b = build_model(spec(kind), seed=3)
    c = build_model(spec(kind), seed=4)
    assert a.count_params() == b.count_params() == c.count_params()
    sa, sb, sc = a.state_arrays(), b.state_arrays(), c.state_arrays()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert any(not np.array_equal(sa[k], sc[k]) for k in sa)


def test_autoregressive_flags():
    assert not ModelSpec("FFN", 5).autoregressive and not ModelSpec("DeepONet", 5).autoregressive
    assert all(ModelSpec(k, 5).autoregressive for k in KINDS[2:])


@pytest.mark.parametrize("bad", [dict(kind="Transformer"), dict(hyper=dict(width=0)), dict(hyper=dict(width=-3)),
                                 dict(hyper=dict(depth=2.5)), dict(hyper=dict(nonsense=1))])
def test_invalid_spec_rejected(bad):
    kw = dict(kind="FFN", omega_dim=5)
    kw.update(bad)
    with pytest.raises(ConfigurationError):
        ModelSpec(**kw)


def test_branch_trunk_width_mismatch():
    with pytest.raises(ConfigurationError):
        build_model(spec("DeepONet", branch_width=10, trunk_width=12))
    with pytest.raises(ConfigurationError):
        build_model(spec("AutoEDeepONet", sample_grid=(4, 4), branch_width=8, trunk_width=6))


def test_spec_json_roundtrip():
    s = spec("FNO", modes=(3, 4), hidden=8)
    assert ModelSpec.from_json(json.loads(json.dumps(s.to_json()))) == s
    s = ModelSpec("UNet", 5, field_scale=0.25)
    assert ModelSpec.from_json(json.loads(json.dumps(s.to_json()))).field_scale == 0.25


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_field_scale_must_be_positive(bad):
    with pytest.raises(ConfigurationError):
        ModelSpec("UNet", 5, field_scale=bad)


# ---------------------------------------------------------------- FFN

def test_ffn_zero_final_layer_outputs_bias():
    m = f64("FFN")
    last = m.net.layers[-1]
    last.weight.data[...] = 0
    last.bias.data[...] = [0.25, -1.5]
    rng = np.random.default_rng(0)
    out = m(rng.uniform(size=(7, 3)), rng.uniform(size=5)).data
    assert np.allclose(out, [0.25, -1.5])


def test_ffn_shapes():
    m = f64("FFN")
    assert m(np.full(3, 0.5), np.full(5, 0.5)).shape == (2,)
    assert m(np.full((9, 3), 0.5), np.full(5, 0.5)).shape == (9, 2)


def test_ffn_permutation_equivariance():
    m = f64("FFN")
    rng = np.random.default_rng(1)
    q, om = rng.uniform(size=(6, 3)), rng.uniform(size=(6, 5))
    perm = rng.permutation(6)
    assert np.allclose(m(q, om).data[perm], m(q[perm], om[perm]).data, atol=1e-12)


def test_unnormalized_omega_warns():
    m = f64("FFN")
    with pytest.warns(RuntimeWarning, match="unnormalized"):
        m(np.full(3, 0.5), np.full(5, 40.0))


# ---------------------------------------------------------------- DeepONet family

def test_aggregate_dot_of_ones():
    p = 7
    out = aggregate(Tensor(np.ones((1, p))), Tensor(np.ones((1, 1, p))), Tensor(np.zeros(1)), 1)
    assert out.data.item() == p


def test_aggregate_orthogonal_gives_bias():
    out = aggregate(Tensor(np.array([[1.0, 0.0]])), Tensor(np.array([[[0.0, 3.0]]])), Tensor(np.array([0.5])), 1)
    assert out.data.item() == 0.5


def test_deeponet_branch_reuse_matches_naive():
    m = f64("DeepONet", width=20, branch_depth=3, trunk_depth=4)
    rng = np.random.default_rng(2)
    q, om = rng.uniform(size=(3, 11, 3)), rng.uniform(size=(3, 5))
    fast, slow = m(q, om).data, m.forward_naive(q, om).data
    assert fast.shape == (3, 11, 2)
    assert np.max(np.abs(fast - slow)) < 1e-6


def test_deeponet_gradients_match_finite_differences():
    m = f64("DeepONet", width=6, branch_depth=2, trunk_depth=2)
    rng = np.random.default_rng(3)
    q, om = rng.uniform(size=(2, 4, 3)), rng.uniform(size=(2, 5))
    assert check_grad(lambda: (m(q, om) * m(q, om)).sum(), m.parameters()) < 1e-5


def sampled_inputs(m, b=2, k=5, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((b, m.sample_length)), rng.uniform(size=(b, m.spec.omega_dim)),
            rng.uniform(size=(b, k, 2)))


@pytest.mark.parametrize("kind", ["AutoDeepONet", "AutoEDeepONet"])
def test_auto_branch_reuse_matches_naive(kind):
    m = f64(kind, sample_grid=(4, 4), width=16)
    args = sampled_inputs(m)
    assert np.max(np.abs(m(*args).data - m.forward_naive(*args).data)) < 1e-6


def test_auto_deeponet_zero_trunk_gives_bias():
    m = f64("AutoDeepONet", sample_grid=(4, 4), width=16)
    for p in m.trunk.parameters():
        p.data[...] = 0
    m.bias.data[...] = [0.3, -0.7]
    out = m(*sampled_inputs(m, b=1, k=9)).data
    assert out.shape == (1, 9, 2)
    assert np.allclose(out, [0.3, -0.7])


def test_auto_deeponet_single_sample_shape():
    m = f64("AutoDeepONet", sample_grid=(4, 4), width=16)
    us, om, q = sampled_inputs(m, b=1, k=12)
    assert m(us[0], om[0], q[0]).shape == (12, 2)


def test_sample_length_contract():
    m = f64("AutoDeepONet", sample_grid=(4, 4), width=16)
    us, om, q = sampled_inputs(m)
    with pytest.raises(InputError):
        m(us[:, :-1], om, q)


def test_edeeponet_hand_example():
    m = f64("AutoEDeepONet", sample_grid=(2, 2), width=2, out_dim=1)
    m.branch_u = lambda x: Tensor(np.array([[1.0, 2.0]]))
    m.branch_omega = lambda x: Tensor(np.array([[3.0, 4.0]]))
    m.trunk = lambda x: Tensor(np.ones((1, 1, 2)))
    m.bias.data[...] = 0
    out = m(np.zeros(8), np.zeros(5), np.zeros((1, 2))).data
    assert out.item() == 11.0


def test_edeeponet_zero_first_branch_gives_bias():
    m = f64("AutoEDeepONet", sample_grid=(4, 4), width=8)
    m.branch_u = lambda x: Tensor(np.zeros((x.shape[0], 16)))
    m.bias.data[...] = [1.25, 2.5]
    assert np.allclose(m(*sampled_inputs(m)).data, [1.25, 2.5])


def test_edeeponet_with_unit_omega_branch_equals_deeponet():
    e = f64("AutoEDeepONet", omega_dim=0, sample_grid=(4, 4), width=8, seed=5)
    d = f64("AutoDeepONet", omega_dim=0, sample_grid=(4, 4), width=8, seed=9)
    for dst, src in ((d.branch, e.branch_u), (d.trunk, e.trunk)):
        dst.load_state_arrays(src.state_arrays())
    e.bias.data[...] = d.bias.data[...] = [0.1, -0.2]
    e.branch_omega = lambda x: Tensor(np.ones((x.shape[0], 16)))
    args = sampled_inputs(e)
    assert np.max(np.abs(e(*args).data - d(*args).data)) < 1e-6


# ---------------------------------------------------------------- DeepONet with CNN branch

def test_cnn_branch_shape_on_64_grid():
    m = build_model(ModelSpec("AutoDeepONetCNN", omega_dim=5, grid=(64, 64)), seed=0)
    rng = np.random.default_rng(0)
    out = m(rng.standard_normal((8, 64, 64)), rng.uniform(size=(10, 2)))
    assert out.shape == (10, 2)


def test_cnn_branch_invariant_to_rolling_constant_field():
    m = f64("AutoDeepONetCNN")
    field = np.full((1, 8, 16, 16), 0.7)
    q = np.random.default_rng(1).uniform(size=(1, 6, 2))
    rolled = np.roll(field, 1, axis=-1)
    assert np.array_equal(m(field, q).data, m(rolled, q).data)


def test_cnn_branch_zero_input_gives_bias():
    m = f64("AutoDeepONetCNN")
    for conv in m.convs:
        conv.bias.data[...] = 0
    m.head.bias.data[...] = 0
    m.bias.data[...] = [0.4, -0.1]
    out = m(np.zeros((1, 8, 16, 16)), np.random.default_rng(0).uniform(size=(1, 5, 2))).data
    assert np.allclose(out, [0.4, -0.1])


def test_cnn_branch_wrong_grid():
    m = f64("AutoDeepONetCNN")
    with pytest.raises(InputError):
        m(np.zeros((1, 8, 32, 32)), np.zeros((1, 3, 2)))


# ---------------------------------------------------------------- image-to-image models

def test_resnet_zero_residual_is_fin_fout_composition():
    m = f64("ResNet")
    for block in m.blocks:
        block.conv2.weight.data[...] = 0
        block.conv2.bias.data[...] = 0
    x = np.random.default_rng(0).standard_normal((1, 8, 16, 16))
    expected = m.f_out(m.f_in(Tensor(x))).data
    assert np.allclose(m(x).data, expected, atol=1e-12)


def test_resnet_zero_residual_with_identity_doubles_passes_input():
    m = f64("ResNet", out_dim=8, hidden=8)
    for block in m.blocks:
        block.conv2.weight.data[...] = 0
        block.conv2.bias.data[...] = 0
    m.f_in = m.f_out = lambda t: t
    x = np.random.default_rng(0).standard_normal((2, 8, 16, 16))
    assert np.array_equal(m(x).data, x)


def test_resnet_channel_mismatch():
    with pytest.raises(InputError):
        f64("ResNet")(np.zeros((1, 7, 16, 16)))


def test_unet_shape_64():
    m = build_model(ModelSpec("UNet", omega_dim=5), seed=0)
    assert m(np.zeros((1, 8, 64, 64), np.float32)).shape == (1, 2, 64, 64)


def test_unet_indivisible_grid():
    with pytest.raises(ConfigurationError):
        f64("UNet", base=2)(np.zeros((1, 8, 24, 24)))


def test_unet_every_parameter_gets_gradient():
    m = build_model(spec("UNet", base=4), seed=0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 8, 16, 16)).astype(np.float32)
    y = rng.standard_normal((2, 2, 16, 16)).astype(np.float32)
    with dm.Tape() as tape:
        loss = dm.square(m(x) - Tensor(y)).sum()
        tape.backward(loss)
    # conv biases feeding straight into batch norm cancel exactly, so reachability is checked per layer
    layers = {}
    for name, p in m.named_parameters():
        layers.setdefault(name.rsplit(".", 1)[0], []).append(p.grad is not None and np.any(p.grad != 0))
    assert len(layers) == 4 + 2 * 4 * 4 + 4 + 1
    assert all(any(v) for v in layers.values()), [k for k, v in layers.items() if not any(v)]


def test_unet_full_model_finite_differences():
    m = f64("UNet", base=2, levels=2, grid=(8, 8))
    x = np.random.default_rng(0).standard_normal((2, 8, 8, 8))
    params = [m.f_in.conv1.weight, m.down[1].bn2.gamma, m.up[0].weight, m.dec[1].conv2.weight, m.f_out.bias]
    assert check_grad(lambda: dm.square(m(x)).sum(), params) < 1e-3


def test_fno_zero_kernels_make_blocks_identity():
    m = f64("FNO", hidden=4, modes=3, proj=8)
    for block in m.blocks:
        for p in block.parameters():
            p.data[...] = 0
    h = Tensor(np.random.default_rng(0).standard_normal((2, 4, 16, 16)))
    for block in m.blocks:
        assert np.array_equal(block(h).data, h.data)


def _spectral_mix_oracle(x, w):
    """Full-spectrum channel mixing through numpy's real FFT along H and complex FFT along W."""
    wc = w[..., 0] + 1j * w[..., 1]  # [O, C, H//2+1, W]
    X = np.fft.rfft2(np.swapaxes(x, -1, -2))  # [N, C, W, H//2+1]
    Y = np.einsum("ocij,ncji->noji", wc, X)
    return np.swapaxes(np.fft.irfft2(Y, s=x.shape[-1:-3:-1]), -1, -2)


def test_fno_block_matches_dense_spectral_oracle():
    rng = np.random.default_rng(0)
    block = FNOBlock(3, (5, 8), "gelu", rng, np.float64)
    x = rng.standard_normal((2, 3, 8, 8))
    mix = _spectral_mix_oracle(x, block.spectral.weight.data)
    W, b = block.pointwise.weight.data[:, :, 0, 0], block.pointwise.bias.data
    pre = mix + np.einsum("oc,nchw->nohw", W, x) + b[None, :, None, None]
    expected = x + dm.gelu(Tensor(pre)).data
    assert np.max(np.abs(block(Tensor(x)).data - expected)) < 1e-5


def test_fno_modes_over_capacity():
    with pytest.raises(ConfigurationError):
        build_model(spec("FNO", modes=12, grid=(16, 16)))


def test_fno_gradients_match_finite_differences():
    m = f64("FNO", hidden=3, modes=3, proj=4, depth=2, grid=(8, 8))
    x = np.random.default_rng(0).standard_normal((1, 8, 8, 8))
    params = [m.lift.weight, m.blocks[0].spectral.weight, m.blocks[1].pointwise.bias, m.proj2.weight]
    assert check_grad(lambda: dm.square(m(x)).sum(), params) < 1e-5


@settings(max_examples=15, deadline=None)
@given(kind=st.sampled_from(["ResNet", "UNet", "FNO"]), h=st.integers(1, 3), w=st.integers(1, 3),
       c=st.integers(0, 4))
def test_image_models_preserve_shape(kind, h, w, c):
    hw = (16 * h, 16 * w)
    hyper = dict(UNet=dict(base=2), FNO=dict(hidden=4, modes=4, proj=4), ResNet=dict(hidden=4))[kind]
    m = build_model(ModelSpec(kind, omega_dim=c, grid=hw, hyper=hyper), seed=0)
    assert m(np.zeros((1, 3 + c) + hw, np.float32)).shape == (1, 2) + hw


# ---------------------------------------------------------------- inputs and dispatch

def test_image_stack_channel_layout():
    v = np.arange(2 * 2 * 3 * 4, dtype=float).reshape(2, 2, 3, 4)
    mask = np.zeros((2, 3, 4))
    om = np.array([[0.1, 0.2], [0.3, 0.4]])
    x = image_stack(v, mask, om)
    assert x.shape == (2, 5, 3, 4)
    assert np.array_equal(x[:, :2], v) and np.all(x[:, 2] == 0)
    assert np.all(x[1, 4] == 0.4)


def test_sample_lattice_is_uniform_subgrid():
    v = np.random.default_rng(0).standard_normal((1, 2, 64, 64))
    s = sample_lattice(v, (32, 32))
    assert s.shape == (1, 2048)
    assert np.array_equal(s.reshape(2, 32, 32), v[0, :, ::2, ::2])


def test_unit_coordinates_row_major():
    c = unit_coordinates((2, 4))
    assert np.allclose(c[1], [0.375, 0.25]) and np.allclose(c[4], [0.125, 0.75])


def test_predict_rejects_wrong_style():
    m = build_model(spec("FNO", modes=4), seed=0)
    with pytest.raises(ContractError, match="FNO.*query"):
        predict(m, ModelInput(query=np.zeros((1, 4, 3)), omega=np.zeros((1, 5))))


class _Identity(Model):
    def forward(self, field):
        return Tensor(np.asarray(field))


def test_predict_identity_double_passthrough():
    m = _Identity(spec("ResNet"), seed=0)
    x = np.random.default_rng(0).standard_normal((3, 8, 16, 16))
    assert np.array_equal(predict(m, ModelInput(field=x)), x)


@pytest.mark.parametrize("kind", ["ResNet", "AutoDeepONet", "AutoDeepONetCNN", "DeepONet"])
def test_field_scale_is_a_change_of_units(kind):
    hyper = {"AutoDeepONet": dict(sample_grid=(4, 4), width=8), "AutoDeepONetCNN": dict(width=8, channels=(4, 4)),
             "DeepONet": dict(width=8, branch_depth=2, trunk_depth=2), "ResNet": dict(hidden=4)}[kind]
    c = 0.03
    unit = build_model(spec(kind, **hyper), seed=1, dtype=np.float64)
    scaled = build_model(ModelSpec(kind, 5, grid=(16, 16), hyper=hyper, field_scale=c), seed=1, dtype=np.float64)
    rng = np.random.default_rng(0)
    if kind == "DeepONet":
        a = b = ModelInput(query=rng.uniform(size=(2, 7, 3)), omega=rng.uniform(size=(2, 5)))
    else:
        vel, mask, om = rng.standard_normal((2, 2, 16, 16)), np.ones((2, 16, 16)), rng.uniform(size=(2, 5))
        q = rng.uniform(size=(2, 7, 2))
        a = model_input_for(unit.spec, vel, mask, om, query=q)
        b = model_input_for(scaled.spec, c * vel, mask, om, query=q)
    assert np.allclose(predict(scaled, b), c * predict(unit, a), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("kind", ["UNet", "AutoDeepONet", "FFN"])
def test_predict_batch_order_preserving(kind):
    m = f64(kind, **({"sample_grid": (4, 4)} if kind == "AutoDeepONet" else {}))
    m.eval()
    rng = np.random.default_rng(0)
    n = 4
    if kind == "FFN":
        inp = ModelInput(query=rng.uniform(size=(n, 3)), omega=rng.uniform(size=(n, 5)))
    else:
        inp = model_input_for(m.spec, rng.standard_normal((n, 2, 16, 16)), np.ones((n, 16, 16)),
                              rng.uniform(size=(n, 5)))
    perm = rng.permutation(n)
    shuffled = ModelInput(**{k: None if v is None else v[perm] for k, v in vars(inp).items()})
    assert np.allclose(predict(m, inp)[perm], predict(m, shuffled), atol=1e-12)


SMALL = dict(AutoFFN=dict(sample_grid=(8, 8), width=32), AutoDeepONet=dict(sample_grid=(8, 8)),
             AutoEDeepONet=dict(sample_grid=(8, 8)))


@pytest.mark.parametrize("kind", KINDS[2:])
def test_next_field_shape_for_every_autoregressive_kind(kind):
    m = build_model(spec(kind, **SMALL.get(kind, {})), seed=0)
    out = predict_next_field(m, np.zeros((3, 2, 16, 16), np.float32), np.ones((16, 16)), np.full(5, 0.5), chunk=2)
    assert out.shape == (3, 2, 16, 16)


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_roundtrip(tmp_path):
    m = build_model(dataclasses.replace(spec("UNet", base=4), field_scale=0.02), seed=7)
    m.down[0].bn1.running_mean[...] = 0.5
    save_checkpoint(m, tmp_path / "ck")
    manifest = json.loads((tmp_path / "ck" / "manifest.json").read_text())
    names = [e["name"] for e in manifest["tensors"]]
    assert names[:len(m.parameters())] == [n for n, _ in m.named_parameters()]
    assert manifest["total_bytes"] == (tmp_path / "ck" / "weights.bin").stat().st_size
    r = load_checkpoint(tmp_path / "ck")
    assert r.seed == 7 and r.spec == m.spec and r.spec.field_scale == 0.02
    a, b = m.state_arrays(), r.state_arrays()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    x = np.random.default_rng(0).standard_normal((1, 8, 16, 16)).astype(np.float32)
    m.eval(), r.eval()
    assert np.array_equal(predict(m, ModelInput(field=x)), predict(r, ModelInput(field=x)))


def test_checkpoint_truncated_weights(tmp_path):
    save_checkpoint(build_model(spec("ResNet"), seed=0), tmp_path / "ck")
    w = tmp_path / "ck" / "weights.bin"
    w.write_bytes(w.read_bytes()[:-4])
    with pytest.raises(ContainerError):
        load_checkpoint(tmp_path / "ck")


def test_auto_deeponet_class_exported():
    assert isinstance(build_model(spec("AutoDeepONet", sample_grid=(4, 4))), AutoDeepONet)
