"""Cubic interpolation kernels for semi-Lagrangian transport.

All routines use the 4-point Lagrange cubic on the uniform grid: exact on
cubic polynomials along each axis, pointwise O(h^4) on smooth data. Points
outside the grid read as zero (compact-support extension) unless the clamp
mode is requested (zero-gradient extension, used for the adjoint variable
whose momentum support is not compact).

The two gather kernels below are the innermost loops of every transport
step; they are njit-compiled and parallelized over independent output
elements, so results are bit-identical for any thread count.
"""

import numpy as np
from numba import njit, prange

EXTEND_ZERO = 0
EXTEND_CLAMP = 1


def lagrange_weights(s):
    """Weights on stencil {-1, 0, 1, 2} for fractional offset s in [0, 1]."""
    s = np.asarray(s, dtype=float)
    w = np.empty(s.shape + (4,))
    w[..., 0] = -s * (s - 1.0) * (s - 2.0) / 6.0
    w[..., 1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
    w[..., 2] = -(s + 1.0) * s * (s - 2.0) / 2.0
    w[..., 3] = (s + 1.0) * s * (s - 1.0) / 6.0
    return w


def split_shift(shift):
    """Split a real shift into integer part and cubic weights.

    A sample at node i of the shifted function lives at position i - shift;
    returns (m, w) with stencil nodes i - m - 2 + a, a = 0..3, and weights
    w (..., 4).
    """
    shift = np.asarray(shift, dtype=float)
    m = np.floor(shift).astype(np.int64)
    frac = 1.0 - (shift - m)  # offset within [base, base+1]
    return m, lagrange_weights(frac)


@njit(cache=True, parallel=True)
def _shift_axis0(f, m, w, out):
    nxn, nyn, np1, np2 = f.shape
    for i in prange(nxn):
        for j in range(nyn):
            for k in range(np1):
                for l in range(np2):
                    base = i - m[k, l] - 2
                    acc = 0.0
                    for a in range(4):
                        ii = base + a
                        if 0 <= ii < nxn:
                            acc += w[k, l, a] * f[ii, j, k, l]
                    out[i, j, k, l] = acc


@njit(cache=True, parallel=True)
def _shift_axis1(f, m, w, out):
    nxn, nyn, np1, np2 = f.shape
    for i in prange(nxn):
        for j in range(nyn):
            for k in range(np1):
                for l in range(np2):
                    base = j - m[k, l] - 2
                    acc = 0.0
                    for a in range(4):
                        jj = base + a
                        if 0 <= jj < nyn:
                            acc += w[k, l, a] * f[i, jj, k, l]
                    out[i, j, k, l] = acc


def shift_x(f, shift1, shift2):
    """Shift each (x1, x2) slab of f by a per-(p1, p2) constant vector.

    shift1, shift2: (np, np) displacements in units of dx. Zero extension.
    """
    m1, w1 = split_shift(shift1)
    m2, w2 = split_shift(shift2)
    tmp = np.empty_like(f)
    _shift_axis0(f, m1, w1, tmp)
    out = np.empty_like(f)
    _shift_axis1(tmp, m2, w2, out)
    return out


@njit(cache=True, parallel=True)
def _gather_p(f, q1, q2, mode, out):
    # out[i,j,k,l] = f[i,j] interpolated at momentum-index position
    # (q1[i,j,k,l], q2[i,j,k,l]); separable 4x4 Lagrange stencil.
    nxn, nyn, np1, np2 = f.shape
    for i in prange(nxn):
        w1 = np.empty(4)
        w2 = np.empty(4)
        for j in range(nyn):
            for k in range(np1):
                for l in range(np2):
                    x = q1[i, j, k, l]
                    y = q2[i, j, k, l]
                    k0 = int(np.floor(x))
                    l0 = int(np.floor(y))
                    s = x - k0
                    t = y - l0
                    w1[0] = -s * (s - 1.0) * (s - 2.0) / 6.0
                    w1[1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
                    w1[2] = -(s + 1.0) * s * (s - 2.0) / 2.0
                    w1[3] = (s + 1.0) * s * (s - 1.0) / 6.0
                    w2[0] = -t * (t - 1.0) * (t - 2.0) / 6.0
                    w2[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
                    w2[2] = -(t + 1.0) * t * (t - 2.0) / 2.0
                    w2[3] = (t + 1.0) * t * (t - 1.0) / 6.0
                    acc = 0.0
                    for a in range(4):
                        kk = k0 - 1 + a
                        if mode == 1:
                            kk = min(max(kk, 0), np1 - 1)
                        elif kk < 0 or kk >= np1:
                            continue
                        row = 0.0
                        for b in range(4):
                            ll = l0 - 1 + b
                            if mode == 1:
                                ll = min(max(ll, 0), np2 - 1)
                            elif ll < 0 or ll >= np2:
                                continue
                            row += w2[b] * f[i, j, kk, ll]
                        acc += w1[a] * row
                    out[i, j, k, l] = acc


def gather_p(f, q1, q2, mode=EXTEND_ZERO):
    """Interpolate every momentum slab of f at foot positions (q1, q2).

    q1, q2 are fractional indices into the momentum axes (0 .. np-1).
    """
    out = np.empty_like(f)
    _gather_p(f, q1, q2, np.int64(mode), out)
    return out


def interp_axis(values, q, mode=EXTEND_ZERO):
    """1D cubic interpolation of `values` at fractional indices q (numpy path)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    q = np.asarray(q, dtype=float)
    k0 = np.floor(q).astype(np.int64)
    w = lagrange_weights(q - k0)
    out = np.zeros(q.shape)
    for a in range(4):
        idx = k0 - 1 + a
        if mode == EXTEND_CLAMP:
            out += w[..., a] * values[np.clip(idx, 0, n - 1)]
        else:
            ok = (idx >= 0) & (idx < n)
            out += np.where(ok, w[..., a] * values[np.clip(idx, 0, n - 1)], 0.0)
    return out


def interp4(f, grid, x, p, mode=EXTEND_ZERO):
    """Cubic interpolation of the phase-space array f at one point (x, p).

    Separable 4-point Lagrange stencil in all four axes; points outside the
    grid read as zero. Exact at grid points and on per-axis cubics.
    """
    q = np.empty(4)
    q[0] = (x[0] + grid.x_extent) / grid.dx
    q[1] = (x[1] + grid.x_extent) / grid.dx
    q[2] = (p[0] + grid.p_extent) / grid.dp - 0.5
    q[3] = (p[1] + grid.p_extent) / grid.dp - 0.5
    base = np.floor(q).astype(np.int64)
    w = lagrange_weights(q - base)
    acc = 0.0
    for a in range(4):
        ia = base[0] - 1 + a
        if not 0 <= ia < f.shape[0]:
            continue
        for b in range(4):
            jb = base[1] - 1 + b
            if not 0 <= jb < f.shape[1]:
                continue
            wij = w[0, a] * w[1, b]
            for c in range(4):
                kc = base[2] - 1 + c
                if mode == EXTEND_CLAMP:
                    kc = min(max(kc, 0), f.shape[2] - 1)
                elif not 0 <= kc < f.shape[2]:
                    continue
                for d in range(4):
                    ld = base[3] - 1 + d
                    if mode == EXTEND_CLAMP:
                        ld = min(max(ld, 0), f.shape[3] - 1)
                    elif not 0 <= ld < f.shape[3]:
                        continue
                    acc += wij * w[2, c] * w[3, d] * f[ia, jb, kc, ld]
    return acc
