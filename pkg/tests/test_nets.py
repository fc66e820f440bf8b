"""Network jets against finite differences, periodicity, checkpoints, backends."""

import numpy as np
import pytest

import mfglab.backends as backends
from mfglab import nets, tape
from mfglab.nets import CheckpointError, Mlp
from mfglab.tape import Var


def fd_jets(net, params, x, h=1e-4):
    """Central-difference gradient and diagonal second derivative at x (B, d)."""
    batch, d = x.shape
    val = nets.value_batch(net, params, x)
    grad = np.zeros((batch, d))
    diag = np.zeros((batch, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        up = nets.value_batch(net, params, x + e)
        dn = nets.value_batch(net, params, x - e)
        grad[:, k] = (up - dn)[:, 0] / (2 * h)
        diag[:, k] = (up - 2 * val + dn)[:, 0] / h ** 2
    return val, grad, diag


def random_net(rng):
    d = int(rng.integers(1, 9))
    depth = int(rng.integers(1, 4))
    width = int(rng.integers(3, 12))
    periodic = bool(rng.integers(0, 2))
    n_lead = int(rng.integers(0, d)) if (periodic and rng.random() < 0.3) else 0
    net = Mlp((d,) + (width,) * depth + (1,), periodic=periodic, n_lead_raw=n_lead)
    return net, net.init_params(seed=int(rng.integers(0, 2 ** 31)))


def test_jets_match_finite_differences_over_random_nets():
    rng = np.random.default_rng(10)
    worst_g = worst_s = 0.0
    for _ in range(25):
        net, params = random_net(rng)
        x = rng.random((5, net.d_in)) * 2 - 0.5
        val, grad, diag = nets.jet_batch(net, params, x)
        grad, diag = grad[:, :, 0], diag[:, :, 0]
        fval, fgrad, fdiag = fd_jets(net, params, x)
        assert np.allclose(val[:, 0], fval[:, 0], rtol=1e-12)
        scale_g = max(1.0, np.abs(fgrad).max())
        scale_s = max(1.0, np.abs(fdiag).max())
        worst_g = max(worst_g, np.abs(grad - fgrad).max() / scale_g)
        worst_s = max(worst_s, np.abs(diag - fdiag).max() / scale_s)
    assert worst_g < 1e-6
    assert worst_s < 1e-5  # second differences lose ~h^2*cond digits


def test_parameter_gradient_of_jet_loss_matches_fd():
    rng = np.random.default_rng(11)
    net = Mlp((2, 7, 7, 1), periodic=True)
    params = net.init_params(seed=3)
    x = rng.random((4, 2))

    def loss_fn(p):
        if isinstance(p, Var):
            v, g, s = nets.jet_batch_var(net, p, x)
        else:
            v, g, s = nets.jet_batch(net, p, x)
        return (v * v).mean() + (g * g).mean() + (s * s).mean()

    g = tape.loss_param_grad(loss_fn, params)
    h = 1e-5
    fd = np.zeros_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        fd[i] = (loss_fn(params + e) - loss_fn(params - e)) / (2 * h)
    scale = max(1.0, np.abs(fd).max())
    assert np.abs(g - fd).max() / scale < 1e-6


def test_periodic_net_is_exactly_unit_periodic():
    net = Mlp((3, 9, 9, 1), periodic=True)
    params = net.init_params(seed=5)
    rng = np.random.default_rng(12)
    # dyadic inputs: x + integer shift is exact, so the reduced residue is
    # bit-identical and the whole jet must be too
    x = rng.integers(0, 1024, (6, 3)) / 1024.0
    shift = np.array([1.0, -2.0, 3.0])
    a = nets.jet_batch(net, params, x)
    b = nets.jet_batch(net, params, x + shift)
    for lane_a, lane_b in zip(a, b):
        assert np.array_equal(lane_a, lane_b)
    # generic inputs: the sum x + shift itself rounds, so periodicity holds
    # to input-rounding precision rather than bitwise
    xg = rng.random((6, 3))
    ag = nets.jet_batch(net, params, xg)
    bg = nets.jet_batch(net, params, xg + shift)
    for lane_a, lane_b in zip(ag, bg):
        scale = max(1.0, np.abs(lane_a).max())
        assert np.abs(lane_a - lane_b).max() / scale < 1e-13


def test_n_lead_raw_coordinate_is_not_periodic():
    net = Mlp((2, 8, 1), periodic=True, n_lead_raw=1)
    params = net.init_params(seed=6)
    x = np.array([[0.3, 0.4]])
    shifted_lead = nets.value_batch(net, params, x + [[1.0, 0.0]])
    shifted_per = nets.value_batch(net, params, x + [[0.0, 1.0]])
    base = nets.value_batch(net, params, x)
    assert not np.allclose(shifted_lead, base)
    assert np.array_equal(shifted_per, base)


def test_linear_identity_net_has_zero_diag2_and_exact_jets():
    # single affine layer: value a x + b, gradient a, curvature exactly 0
    net = Mlp((3, 1), activation="identity")
    params = net.init_params(seed=7)
    rng = np.random.default_rng(13)
    params = rng.standard_normal(params.size)
    x = rng.random((5, 3))
    val, grad, diag = nets.jet_batch(net, params, x)
    w = params[:3].reshape(3, 1)
    b = params[3]
    assert np.allclose(val, x @ w + b, atol=1e-14)
    assert np.allclose(grad[:, :, 0], np.broadcast_to(w[:, 0], (5, 3)), atol=1e-15)
    assert np.array_equal(diag, np.zeros((5, 3, 1)))


def test_forward_equals_jet_value_lane_bitwise():
    net = Mlp((2, 6, 6, 1), periodic=True)
    params = net.init_params(seed=8)
    x = np.random.default_rng(14).random((7, 2))
    single = np.array([nets.mlp_forward(net, params, xi) for xi in x])
    assert np.array_equal(single[:, 0], nets.jet_batch(net, params, x)[0][:, 0])
    assert np.array_equal(nets.mlp_forward(net, params, x[0]),
                          nets.mlp_jet(net, params, x[0]).value)


def test_init_params_deterministic_and_biases_zero():
    net = Mlp((4, 10, 10, 1))
    p1 = net.init_params(seed=9)
    p2 = net.init_params(seed=9)
    assert np.array_equal(p1, p2)
    for (w_off, b_off, n_in, n_out) in net.param_layout():
        assert np.array_equal(p1[b_off:b_off + n_out], np.zeros(n_out))
        s = np.sqrt(6.0 / (n_in + n_out))
        w = p1[w_off:b_off]
        assert np.abs(w).max() <= s


def test_architecture_validation():
    with pytest.raises(ValueError):
        Mlp((3,))
    with pytest.raises(ValueError):
        Mlp((3, 0, 1))
    with pytest.raises(ValueError):
        Mlp((3, 5, 1), activation="relu")  # jets need a smooth activation
    with pytest.raises(ValueError):
        Mlp((3, 5, 1), n_lead_raw=1)  # raw lead without periodic embedding
    with pytest.raises(ValueError):
        Mlp((3, 5, 1), periodic=True, n_lead_raw=4)


def test_wrong_param_count_rejected():
    net = Mlp((2, 5, 1))
    with pytest.raises(ValueError):
        nets.jet_batch(net, np.zeros(net.param_count + 1), np.zeros((1, 2)))


@pytest.mark.skipif(not backends.HAVE_COMPILED, reason="compiled backend not built")
def test_backends_agree_on_jets_and_gradients():
    rng = np.random.default_rng(15)
    for _ in range(5):
        net, params = random_net(rng)
        x = rng.random((6, net.d_in)) * 3 - 1

        results = {}
        for name in ("python", "compiled"):
            backends.set_backend(name)
            jet = nets.jet_batch(net, params, x)
            theta = Var(params)
            v, g, s = nets.jet_batch_var(net, theta, x)
            loss = (v * v).mean() + (g * s).mean()
            tape.backward(loss)
            results[name] = (jet, float(loss.value), theta.grad)
        backends.set_backend("auto")

        jp, lp, gp = results["python"]
        jc, lc, gc = results["compiled"]
        for a, b in zip(jp, jc):
            scale = max(1e-30, np.abs(b).max())
            assert np.abs(a - b).max() / scale < 1e-12
        assert abs(lp - lc) <= 1e-12 * max(1.0, abs(lc))
        assert np.abs(gp - gc).max() / max(1e-30, np.abs(gc).max()) < 1e-12


# -- checkpoints -------------------------------------------------------


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = Mlp((2, 6, 1), periodic=True, n_lead_raw=1)
    params = np.random.default_rng(16).standard_normal(net.param_count)
    path = tmp_path / "net.ckpt"
    nets.save_checkpoint(path, net, params)
    net2, params2, extra = nets.load_checkpoint(path)
    assert net2 == net
    assert extra == 0
    assert np.array_equal(params, params2)


def test_checkpoint_extra_scalars_roundtrip(tmp_path):
    net = Mlp((1, 4, 1), periodic=True)
    vec = np.concatenate([net.init_params(seed=1), [0.824]])
    path = tmp_path / "m.ckpt"
    nets.save_checkpoint(path, net, vec, extra_scalars=1)
    net2, vec2, extra = nets.load_checkpoint(path)
    assert extra == 1
    assert np.array_equal(vec, vec2)
    assert vec2[-1] == 0.824


def test_checkpoint_empty_vector_header_only(tmp_path):
    path = tmp_path / "empty.ckpt"
    nets.save_checkpoint(path, None, np.zeros(0))
    raw = path.read_bytes()
    assert raw.endswith(b"---\n")  # no payload bytes after the header
    net, params, extra = nets.load_checkpoint(path)
    assert net is None
    assert params.shape == (0,)
    assert extra == 0


def test_checkpoint_large_bare_vector_bit_exact(tmp_path):
    vec = np.random.default_rng(17).standard_normal(10_000)
    path = tmp_path / "big.ckpt"
    nets.save_checkpoint(path, None, vec)
    net, vec2, _ = nets.load_checkpoint(path)
    assert net is None
    assert np.array_equal(vec, vec2)


def test_checkpoint_truncation_is_parse_error_naming_offset(tmp_path):
    net = Mlp((2, 5, 1))
    path = tmp_path / "t.ckpt"
    nets.save_checkpoint(path, net, net.init_params(seed=2))
    blob = path.read_bytes()
    path.write_bytes(blob[:-9])  # drop part of the payload
    with pytest.raises(CheckpointError, match=r"bytes at offset \d+"):
        nets.load_checkpoint(path)


def test_checkpoint_corrupt_header_errors(tmp_path):
    path = tmp_path / "c.ckpt"
    path.write_bytes(b"not a checkpoint\nwidths = 2,1\n---\n")
    with pytest.raises(CheckpointError, match="bad magic at byte 0"):
        nets.load_checkpoint(path)
    nets.save_checkpoint(path, None, np.ones(3))
    blob = path.read_bytes().replace(b"param_count = 3", b"param_count = 4")
    path.write_bytes(blob)
    with pytest.raises(CheckpointError):
        nets.load_checkpoint(path)


def test_checkpoint_shape_validation(tmp_path):
    net = Mlp((2, 5, 1))
    with pytest.raises(ValueError):
        nets.save_checkpoint(tmp_path / "x.ckpt", net, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        nets.save_checkpoint(tmp_path / "x.ckpt", net, np.zeros(net.param_count + 2))
