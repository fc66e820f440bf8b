# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Fused jet recursion for fully connected networks.

One call evaluates value, per-coordinate first derivative and diagonal
second derivative of every output unit, propagating the packed state
(batch, 1 + 2 d, units) through affine layers (one GEMM per layer for
all jet rows at once) and a C loop for the activation update

    a -> tanh(z),   J -> (1 - t^2) J_z,   S -> (1 - t^2) S_z - 2 t (1 - t^2) J_z^2.

The reverse sweep consumes cotangents of the packed output and returns
the gradient with respect to the flat parameter vector.  With
p = 1 - t^2, q = -2 t p and r = 2 p (3 t^2 - 1), the activation adjoint
is

    zbar    = abar p + sum_k Jbar_k J_z,k q + sum_k Sbar_k (J_z,k^2 r + S_z,k q)
    Jzbar_k = Jbar_k p + 2 Sbar_k q J_z,k
    Szbar_k = Sbar_k p

and the affine adjoint is a single transposed GEMM over batch and jet
rows combined, which is what makes the fused layout fast.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh as ctanh

cnp.import_array()

_DUMMY = np.empty(1)


cdef void _tanh_jets(double[:, :, ::1] z, double[:, :, ::1] out,
                     double[::1] t_save, bint save_t) noexcept nogil:
    """Apply the tanh jet update; z holds pre-activations with bias added."""
    cdef Py_ssize_t batch = z.shape[0]
    cdef Py_ssize_t rows = z.shape[1]
    cdef Py_ssize_t n = z.shape[2]
    cdef Py_ssize_t d = (rows - 1) // 2
    cdef Py_ssize_t b, k, o
    cdef double t, p, q, jz, sz
    for b in range(batch):
        for o in range(n):
            t = ctanh(z[b, 0, o])
            p = 1.0 - t * t
            q = -2.0 * t * p
            out[b, 0, o] = t
            if save_t:
                t_save[b * n + o] = t
            for k in range(d):
                jz = z[b, 1 + k, o]
                sz = z[b, 1 + d + k, o]
                out[b, 1 + k, o] = p * jz
                out[b, 1 + d + k, o] = q * jz * jz + p * sz


cdef void _tanh_adjoint(double[:, :, ::1] gbar, double[::1] t_arr,
                        double[:, :, ::1] z, double[:, :, ::1] zbar) noexcept nogil:
    """Cotangent of the packed pre-activation from the packed output one."""
    cdef Py_ssize_t batch = gbar.shape[0]
    cdef Py_ssize_t rows = gbar.shape[1]
    cdef Py_ssize_t n = gbar.shape[2]
    cdef Py_ssize_t d = (rows - 1) // 2
    cdef Py_ssize_t b, k, o
    cdef double t, p, q, r, jz, sz, jb, sb, acc
    for b in range(batch):
        for o in range(n):
            t = t_arr[b * n + o]
            p = 1.0 - t * t
            q = -2.0 * t * p
            r = 2.0 * p * (3.0 * t * t - 1.0)
            acc = gbar[b, 0, o] * p
            for k in range(d):
                jz = z[b, 1 + k, o]
                sz = z[b, 1 + d + k, o]
                jb = gbar[b, 1 + k, o]
                sb = gbar[b, 1 + d + k, o]
                acc += jb * jz * q + sb * (jz * jz * r + sz * q)
                zbar[b, 1 + k, o] = jb * p + 2.0 * sb * q * jz
                zbar[b, 1 + d + k, o] = sb * p
            zbar[b, 0, o] = acc


def jet_forward(double[::1] params, cnp.int64_t[:, ::1] layout, int act_id,
                a0, j0, s0, bint need_saved):
    """Propagate embedding jets through the network.

    Returns (packed, saved) where packed has shape (batch, 1 + 2 d, d_out)
    with rows [value, J_1..J_d, S_1..S_d], and saved is the per-layer state
    (input jets, pre-activation jets, tanh values, transposed weights) the
    reverse sweep needs, or None unless need_saved.  The weight transposes
    are copies, so a later in-place parameter update cannot corrupt a
    pending reverse sweep.
    """
    a = np.ascontiguousarray(a0, dtype=np.float64)
    jac = np.ascontiguousarray(j0, dtype=np.float64)
    dia = np.ascontiguousarray(s0, dtype=np.float64)
    cdef Py_ssize_t batch = a.shape[0]
    cdef Py_ssize_t d = jac.shape[1]
    cdef Py_ssize_t rows = 1 + 2 * d
    cdef Py_ssize_t n_layers = layout.shape[0]
    cdef Py_ssize_t li, w_off, b_off, n_in, n_out, b, o
    cdef bint hidden
    params_arr = np.asarray(params)

    packed = np.empty((batch, rows, a.shape[1]))
    packed[:, 0, :] = a
    packed[:, 1:1 + d, :] = jac
    packed[:, 1 + d:, :] = dia

    saved = [] if need_saved else None
    cdef double[:, :, ::1] z_view
    cdef double[::1] bias
    for li in range(n_layers):
        w_off = layout[li, 0]
        b_off = layout[li, 1]
        n_in = layout[li, 2]
        n_out = layout[li, 3]
        w = params_arr[w_off:b_off].reshape(n_in, n_out)
        z = np.dot(packed.reshape(batch * rows, n_in), w).reshape(batch, rows, n_out)
        z_view = z
        bias = params[b_off:b_off + n_out]
        for b in range(batch):
            for o in range(n_out):
                z_view[b, 0, o] += bias[o]
        hidden = li < n_layers - 1 and act_id == 1
        if hidden:
            out = np.empty_like(z)
            if need_saved:
                t_save = np.empty(batch * n_out)
                _tanh_jets(z, out, t_save, True)
                saved.append((packed, z, t_save, np.ascontiguousarray(w.T)))
            else:
                _tanh_jets(z, out, _DUMMY, False)
            packed = out
        else:
            if need_saved:
                saved.append((packed, None, None, np.ascontiguousarray(w.T)))
            packed = z
    return packed, saved


def jet_backward(cnp.int64_t[:, ::1] layout, int act_id, list saved, gbar):
    """Reverse sweep: gradient of sum(gbar * packed_output) in the params."""
    cdef Py_ssize_t n_layers = layout.shape[0]
    cdef Py_ssize_t li, w_off, b_off, n_in, n_out
    cdef Py_ssize_t n_params = layout[n_layers - 1, 1] + layout[n_layers - 1, 3]
    grad = np.zeros(n_params)
    cur = np.ascontiguousarray(gbar, dtype=np.float64)
    cdef Py_ssize_t batch = cur.shape[0]
    cdef Py_ssize_t rows = cur.shape[1]
    cdef bint hidden
    for li in range(n_layers - 1, -1, -1):
        w_off = layout[li, 0]
        b_off = layout[li, 1]
        n_in = layout[li, 2]
        n_out = layout[li, 3]
        packed_in, z, t_save, w_t = saved[li]
        hidden = li < n_layers - 1 and act_id == 1
        if hidden:
            zbar = np.empty_like(cur)
            _tanh_adjoint(cur, t_save, z, zbar)
        else:
            zbar = cur
        grad[b_off:b_off + n_out] = zbar[:, 0, :].sum(axis=0)
        zbar2 = zbar.reshape(batch * rows, n_out)
        in2 = packed_in.reshape(batch * rows, n_in)
        np.dot(in2.T, zbar2, out=grad[w_off:b_off].reshape(n_in, n_out))
        if li > 0:
            cur = np.dot(zbar2, w_t).reshape(batch, rows, n_in)
    return grad
