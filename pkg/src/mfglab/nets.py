"""Small dense networks with exact input jets.

A "jet" of a network at a point x collects the output value together with
the first derivative and the diagonal second derivative with respect to
every input coordinate, all propagated exactly layer by layer (no finite
differences).  For an affine layer z = a W + b the jets map linearly; for
an elementwise activation a = phi(z),

    da   = phi'(z) * dz
    dda  = phi''(z) * dz^2 + phi'(z) * ddz

applied per input coordinate.  Only the diagonal of the Hessian is
propagated, which is all that Laplacians and divergence terms need and
keeps the cost linear in the input dimension.

Networks can embed their inputs on the unit torus, coordinate i mapping to
(sin 2 pi x_i, cos 2 pi x_i).  Coordinates are reduced mod 1 before the
embedding so that integer shifts are exactly periodic in floating point.
A leading block of inputs (e.g. a time variable) can be passed through raw.

Two implementations of the jet recursion exist: a compiled kernel (one
fused forward/reverse pass, see backends/_jetcore.pyx) and a pure-Python
composition of tape primitives.  The backend is chosen at import time and
both produce the same values; see mfglab.backends.
"""

from dataclasses import dataclass

import numpy as np

from . import backends, tape
from .tape import Var

TWO_PI = 2.0 * np.pi

# activation tag -> compiled kernel id; anything else is rejected because
# the jet recursion needs two derivatives (and the reverse sweep a third)
ACTIVATION_IDS = {"identity": 0, "tanh": 1}


class CheckpointError(Exception):
    """Raised when a checkpoint file fails to parse or validate."""


def _normalize_activation(tag):
    tag = {"linear": "identity"}.get(tag, tag)
    if tag not in ACTIVATION_IDS:
        raise ValueError(
            f"unsupported activation {tag!r}: jets need a smooth activation, "
            f"one of {sorted(ACTIVATION_IDS)}"
        )
    return tag


@dataclass(frozen=True)
class Mlp:
    """Architecture description: widths include the raw input and output dims.

    ``widths = (d_in, h_1, ..., h_k, d_out)`` builds k hidden layers with the
    given activation and a linear output layer.  With ``periodic=True`` the
    input is embedded as sin/cos pairs (skipping the first ``n_lead_raw``
    coordinates, which are fed through unchanged).
    """

    widths: tuple
    activation: str = "tanh"
    periodic: bool = False
    n_lead_raw: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "activation", _normalize_activation(self.activation))
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be >= 2 positive entries, got {self.widths}")
        if not self.periodic and self.n_lead_raw:
            raise ValueError("n_lead_raw only makes sense with periodic=True")
        if not 0 <= self.n_lead_raw <= self.widths[0]:
            raise ValueError("n_lead_raw out of range")

    @property
    def d_in(self):
        return self.widths[0]

    @property
    def d_out(self):
        return self.widths[-1]

    @property
    def embedded_width(self):
        if not self.periodic:
            return self.d_in
        return self.n_lead_raw + 2 * (self.d_in - self.n_lead_raw)

    def layer_shapes(self):
        dims = (self.embedded_width,) + self.widths[1:]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def param_layout(self):
        """Per layer (w_off, b_off, n_in, n_out) into the flat parameter vector."""
        layout = []
        off = 0
        for n_in, n_out in self.layer_shapes():
            layout.append((off, off + n_in * n_out, n_in, n_out))
            off += n_in * n_out + n_out
        return layout

    @property
    def param_count(self):
        return sum(n_in * n_out + n_out for n_in, n_out in self.layer_shapes())

    def init_params(self, seed):
        """Uniform(-s, s) weights with s = sqrt(6/(fan_in+fan_out)), zero biases."""
        rng = np.random.default_rng(seed)
        params = np.zeros(self.param_count)
        for (w_off, b_off, n_in, n_out) in self.param_layout():
            s = np.sqrt(6.0 / (n_in + n_out))
            params[w_off:b_off] = rng.uniform(-s, s, n_in * n_out)
        return params

    def pack(self, weights, biases):
        """Flatten per-layer weight/bias lists into one parameter vector."""
        parts = []
        for (n_in, n_out), w, b in zip(self.layer_shapes(), weights, biases):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ValueError(f"layer shape mismatch: {w.shape}, {b.shape}")
            parts.append(w.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)

    def unpack(self, params):
        params = self._check_params(params)
        weights, biases = [], []
        for (w_off, b_off, n_in, n_out) in self.param_layout():
            weights.append(params[w_off:b_off].reshape(n_in, n_out))
            biases.append(params[b_off:b_off + n_out])
        return weights, biases

    def _check_params(self, params):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.param_count,):
            raise ValueError(
                f"parameter vector has shape {params.shape}, "
                f"expected ({self.param_count},)"
            )
        return params


@dataclass
class InputJet:
    """Network output with exact input derivatives at one point.

    value: (d_out,); grad: (d_out, d_in); diag2: (d_out, d_in) holding the
    per-coordinate second derivatives d^2 out_j / d x_i^2.
    """

    value: np.ndarray
    grad: np.ndarray
    diag2: np.ndarray


def embedding_jets(net, x):
    """Value/grad/diag2 of the input embedding at points x of shape (B, d)."""
    x = np.asarray(x, dtype=np.float64)
    batch, d = x.shape
    if d != net.d_in:
        raise ValueError(f"input dim {d} does not match net d_in {net.d_in}")
    e = net.embedded_width
    a = np.zeros((batch, e))
    jac = np.zeros((batch, d, e))
    dia = np.zeros((batch, d, e))
    r = net.n_lead_raw if net.periodic else d
    a[:, :r] = x[:, :r]
    for k in range(r):
        jac[:, k, k] = 1.0
    if net.periodic:
        # reduce mod 1 so only the residue enters sin/cos: inputs with equal
        # residue bit patterns embed identically regardless of magnitude
        xr = x[:, r:] - np.floor(x[:, r:])
        ang = TWO_PI * xr
        s, c = np.sin(ang), np.cos(ang)
        cols = r + 2 * np.arange(d - r)
        a[:, cols] = s
        a[:, cols + 1] = c
        for i, k in enumerate(range(r, d)):
            jac[:, k, cols[i]] = TWO_PI * c[:, i]
            jac[:, k, cols[i] + 1] = -TWO_PI * s[:, i]
            dia[:, k, cols[i]] = -TWO_PI**2 * s[:, i]
            dia[:, k, cols[i] + 1] = -TWO_PI**2 * c[:, i]
    return a, jac, dia


def _jet_plain(net, params, x):
    """Straight-line numpy jet recursion: (B, out), (B, d, out), (B, d, out)."""
    params = net._check_params(params)
    a, jac, dia = embedding_jets(net, x)
    layout = net.param_layout()
    tanh_act = net.activation == "tanh"
    for li, (w_off, b_off, n_in, n_out) in enumerate(layout):
        w = params[w_off:b_off].reshape(n_in, n_out)
        b = params[b_off:b_off + n_out]
        z = a @ w + b
        jz = jac @ w
        sz = dia @ w
        if li < len(layout) - 1 and tanh_act:
            t = np.tanh(z)
            p = 1.0 - t * t
            q = -2.0 * t * p
            a = t
            jac = p[:, None, :] * jz
            dia = q[:, None, :] * jz * jz + p[:, None, :] * sz
        else:
            a, jac, dia = z, jz, sz
    return a, jac, dia


def _jet_tape(net, theta, x):
    """Jet recursion composed from tape primitives; theta is a flat Var."""
    a, jac, dia = embedding_jets(net, x)
    batch = x.shape[0]
    layout = net.param_layout()
    tanh_act = net.activation == "tanh"
    for li, (w_off, b_off, n_in, n_out) in enumerate(layout):
        w = theta[w_off:b_off].reshape(n_in, n_out)
        b = theta[b_off:b_off + n_out]
        z = tape.matmul(a, w) + b
        jz = tape.matmul(jac, w)
        sz = tape.matmul(dia, w)
        if li < len(layout) - 1 and tanh_act:
            t = tape.tanh(z)
            p = 1.0 - t * t
            q = (-2.0) * t * p
            pn = p.reshape(batch, 1, n_out)
            qn = q.reshape(batch, 1, n_out)
            a = t
            jac = pn * jz
            dia = qn * jz * jz + pn * sz
        else:
            a, jac, dia = z, jz, sz
    return a, jac, dia


def jet_batch(net, params, x):
    """Plain-evaluation jets at points x (B, d): arrays (B, out), (B, d, out) x2."""
    x = np.asarray(x, dtype=np.float64)
    if backends.active() == "compiled":
        params = net._check_params(params)
        a0, j0, s0 = embedding_jets(net, x)
        packed = backends.jetcore().jet_forward(
            np.ascontiguousarray(params),
            net._layout_array(),
            ACTIVATION_IDS[net.activation],
            a0, j0, s0, False,
        )[0]
        d = x.shape[1]
        return packed[:, 0, :], packed[:, 1:1 + d, :], packed[:, 1 + d:, :]
    return _jet_plain(net, params, x)


def _layout_array(net):
    return np.asarray(net.param_layout(), dtype=np.int64).reshape(-1, 4)


Mlp._layout_array = _layout_array


def jet_batch_var(net, theta, x):
    """Tracked jets: (value, grad, diag2) Vars wired to the flat parameter Var."""
    if not isinstance(theta, Var):
        raise TypeError("theta must be a tape Var; use jet_batch for plain arrays")
    x = np.asarray(x, dtype=np.float64)
    net._check_params(theta.value)
    if backends.active() == "compiled":
        core = backends.jetcore()
        a0, j0, s0 = embedding_jets(net, x)
        layout = net._layout_array()
        act = ACTIVATION_IDS[net.activation]
        packed, saved = core.jet_forward(
            np.ascontiguousarray(theta.value), layout, act, a0, j0, s0, True
        )
        out = Var(packed, (theta,))

        def bwd():
            theta._accumulate(
                core.jet_backward(layout, act, saved, np.ascontiguousarray(out.grad))
            )

        out._backward = bwd
        d = x.shape[1]
        return out[:, 0, :], out[:, 1:1 + d, :], out[:, 1 + d:, :]
    return _jet_tape(net, theta, x)


def value_batch_var(net, theta, x):
    """Tracked forward pass only (no jets): Var of shape (B, out)."""
    if not isinstance(theta, Var):
        raise TypeError("theta must be a tape Var")
    x = np.asarray(x, dtype=np.float64)
    net._check_params(theta.value)
    a, _, _ = embedding_jets(net, x)
    layout = net.param_layout()
    tanh_act = net.activation == "tanh"
    for li, (w_off, b_off, n_in, n_out) in enumerate(layout):
        w = theta[w_off:b_off].reshape(n_in, n_out)
        b = theta[b_off:b_off + n_out]
        z = tape.matmul(a, w) + b
        a = tape.tanh(z) if (li < len(layout) - 1 and tanh_act) else z
    return a


def value_batch(net, params, x):
    """Plain forward pass at points x (B, d) -> (B, out)."""
    params = net._check_params(params)
    x = np.asarray(x, dtype=np.float64)
    a, _, _ = embedding_jets(net, x)
    layout = net.param_layout()
    tanh_act = net.activation == "tanh"
    for li, (w_off, b_off, n_in, n_out) in enumerate(layout):
        w = params[w_off:b_off].reshape(n_in, n_out)
        b = params[b_off:b_off + n_out]
        z = a @ w + b
        a = np.tanh(z) if (li < len(layout) - 1 and tanh_act) else z
    return a


def mlp_jet(net, params, x):
    """Jet at a single point x of shape (d,)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    value, grad, diag2 = jet_batch(net, params, x[None, :])
    # internal layout is (B, d, out); the public one is (out, d)
    return InputJet(value[0], grad[0].T.copy(), diag2[0].T.copy())


def mlp_forward(net, params, x):
    """Network value at a single point; the value lane of the jet kernel.

    Routing the forward pass through the jet kernel makes the value agree
    bit for bit with mlp_jet under either backend.
    """
    return mlp_jet(net, params, x).value


# -- checkpoints -------------------------------------------------------

_CKPT_MAGIC = "mfglab-checkpoint v1"


def save_checkpoint(path, net, params, extra_scalars=0):
    """Write architecture header plus raw float64 parameters.

    ``params`` holds the net parameters followed by ``extra_scalars``
    trailing trainable scalars (e.g. a learned constant appended to a
    parameter vector).  ``net`` may be None to store a bare vector with
    no architecture attached (the header then says ``widths = none``);
    an empty vector yields a header-only file.  Round trip is bit exact.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1:
        raise ValueError(f"params must be one-dimensional, got shape {params.shape}")
    if net is None:
        widths_str, activation, periodic, n_lead_raw = "none", "none", 0, 0
        expect = params.size
    else:
        widths_str = ",".join(str(w) for w in net.widths)
        activation, periodic, n_lead_raw = (net.activation, int(net.periodic),
                                            net.n_lead_raw)
        expect = net.param_count + extra_scalars
    if params.shape != (expect,):
        raise ValueError(f"params shape {params.shape}, expected ({expect},)")
    header = (
        f"{_CKPT_MAGIC}\n"
        f"widths = {widths_str}\n"
        f"activation = {activation}\n"
        f"periodic = {periodic}\n"
        f"n_lead_raw = {n_lead_raw}\n"
        f"extra_scalars = {extra_scalars}\n"
        f"param_count = {expect}\n"
        f"---\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(params.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (net, params, extra_scalars).

    Validation failures raise CheckpointError naming the byte offset of
    the offending header line or payload position.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    offset = 0
    fields = {}
    magic_seen = False
    while True:
        end = blob.find(b"\n", offset)
        if end < 0:
            raise CheckpointError(f"unterminated header at byte {offset}")
        line = blob[offset:end].decode("ascii", errors="replace")
        line_off = offset
        offset = end + 1
        if not magic_seen:
            if line != _CKPT_MAGIC:
                raise CheckpointError(f"bad magic at byte {line_off}: {line!r}")
            magic_seen = True
            continue
        if line == "---":
            break
        if "=" not in line:
            raise CheckpointError(f"malformed header line at byte {line_off}: {line!r}")
        key, _, val = line.partition("=")
        fields[key.strip()] = val.strip()
    try:
        if fields["widths"] == "none":
            net = None
        else:
            net = Mlp(
                tuple(int(w) for w in fields["widths"].split(",")),
                activation=fields["activation"],
                periodic=bool(int(fields["periodic"])),
                n_lead_raw=int(fields["n_lead_raw"]),
            )
        extra = int(fields["extra_scalars"])
        count = int(fields["param_count"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"invalid header (payload starts at byte {offset}): {exc}")
    if net is not None and count != net.param_count + extra:
        raise CheckpointError(
            f"param_count {count} inconsistent with architecture "
            f"({net.param_count} net + {extra} extra)"
        )
    payload = blob[offset:]
    if len(payload) != 8 * count:
        raise CheckpointError(
            f"payload is {len(payload)} bytes at offset {offset}, expected {8 * count}"
        )
    params = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return net, params, extra
