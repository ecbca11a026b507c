import numpy as np

from stereopaint import tensor as tn
from stereopaint.layers import GatedConv, SpectralNormState, gated_conv_forward, spectral_normalize
from stereopaint.tensor import ConvSpec, Tensor


def make_layer(rng, gate_bias=0.0, activation="elu", ci=2, co=3):
    spec = ConvSpec((3, 3), 1, 1, ci, co)
    return GatedConv(
        w_feat=Tensor(rng.normal(size=(co, ci, 3, 3)).astype(np.float32) * 0.4,
                      requires_grad=True),
        b_feat=Tensor(np.zeros(co, np.float32), requires_grad=True),
        w_gate=Tensor(rng.normal(size=(co, ci, 3, 3)).astype(np.float32) * 0.4,
                      requires_grad=True),
        b_gate=Tensor(np.full(co, gate_bias, np.float32), requires_grad=True),
        spec=spec,
        activation=activation,
    )


def test_gate_saturation_low(rng):
    layer = make_layer(rng, gate_bias=-1000.0)
    x = Tensor(rng.normal(size=(1, 2, 5, 5)).astype(np.float32))
    feats, _ = gated_conv_forward(layer, x)
    assert np.max(np.abs(feats.data)) < 1e-6


def test_gate_saturation_high(rng):
    layer = make_layer(rng, gate_bias=1000.0)
    x = Tensor(rng.normal(size=(1, 2, 5, 5)).astype(np.float32))
    feats, _ = gated_conv_forward(layer, x)
    raw = tn.elu(tn.conv2d(x, layer.w_feat, layer.b_feat, layer.spec))
    assert np.max(np.abs(feats.data - raw.data)) < 1e-5


def test_zero_everything_identity_activation():
    spec = ConvSpec((3, 3), 1, 1, 2, 3)
    zero = lambda shape: Tensor(np.zeros(shape, np.float32))
    layer = GatedConv(zero((3, 2, 3, 3)), zero(3), zero((3, 2, 3, 3)), zero(3),
                      spec, activation="identity")
    feats, gate = gated_conv_forward(layer, zero((1, 2, 4, 4)))
    assert np.all(feats.data == 0.0)
    assert np.allclose(gate.data, 0.5)


def test_soft_gate_strictly_inside_unit_interval(rng):
    layer = make_layer(rng)
    x = Tensor(rng.normal(size=(2, 2, 6, 6)).astype(np.float32) * 3)
    _, gate = gated_conv_forward(layer, x)
    assert np.all(gate.data > 0.0) and np.all(gate.data < 1.0)


def test_gated_conv_grad_check(rng):
    layer = make_layer(rng)
    x = Tensor(rng.normal(size=(1, 2, 5, 5)).astype(np.float32), requires_grad=True)
    err = tn.grad_check(lambda t: tn.sum_all(gated_conv_forward(layer, t)[0]), x)
    assert err < 1e-3


def _state(w, iterations=1):
    u = np.ones(w.shape[0], dtype=np.float32)
    u /= np.linalg.norm(u)
    return SpectralNormState(weight=Tensor(np.asarray(w, np.float32), requires_grad=True),
                             u_vector=u, power_iterations=iterations)


def test_spectral_diagonal_case():
    state = _state(np.diag([3.0, 1.0]))
    eff = spectral_normalize(state, iterations=5)
    assert np.allclose(eff.data, np.diag([1.0, 1.0 / 3.0]), atol=1e-3)


def test_spectral_identity_unchanged():
    state = _state(np.eye(3))
    eff = spectral_normalize(state, iterations=10)
    assert np.allclose(eff.data, np.eye(3), atol=1e-6)


def test_spectral_scale_invariance(rng):
    w = rng.normal(size=(4, 6)).astype(np.float32)
    a = spectral_normalize(_state(w), iterations=40).data
    b = spectral_normalize(_state(2.0 * w), iterations=40).data
    assert np.allclose(a, b, atol=1e-3)


def test_spectral_zero_weight_degenerates():
    state = _state(np.zeros((3, 3)))
    eff = spectral_normalize(state)
    assert state.degenerate
    assert np.array_equal(eff.data, np.zeros((3, 3), np.float32))


def test_spectral_matches_svd_oracle(rng):
    w = rng.normal(size=(8, 8)).astype(np.float32)
    state = _state(w)
    eff = spectral_normalize(state, iterations=10).data
    top = np.linalg.svd(w.reshape(8, -1).astype(np.float64), compute_uv=False)[0]
    est = np.linalg.svd(eff.reshape(8, -1).astype(np.float64), compute_uv=False)[0]
    # effective weight has unit top singular value within 1e-2 relative
    assert abs(est - 1.0) < 1e-2
    assert top > 0


def test_spectral_u_vector_persists(rng):
    w = rng.normal(size=(4, 5)).astype(np.float32)
    state = _state(w)
    before = state.u_vector.copy()
    spectral_normalize(state)
    moved = state.u_vector.copy()
    assert not np.allclose(before, moved)
    spectral_normalize(state, update_state=False)
    assert np.array_equal(state.u_vector, moved)
