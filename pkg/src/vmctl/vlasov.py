"""Semi-Lagrangian transport of phase-space densities.

The Vlasov (and generalized/adjoint) equation

    d_t f + phat . d_x f + K . d_p f = S,    K = E - perp(phat) B,

is advanced by Strang splitting x(dt/2) [S dt/2, p(dt), S dt/2] x(dt/2):
backward-traced characteristic feet, 4-point Lagrange cubic interpolation.
The x-stage feet are exact (phat is constant during the stage); the p-stage
uses an RK2 (midpoint) trace, which is cheap because K is analytic in p at
fixed fields. Negative dt runs the same update backward in time, which is
how the adjoint sweep reuses this machinery.

K is divergence-free in p (perp(phat) has zero p-divergence), so the
continuum flow is volume preserving and all L^q norms are conserved;
discretely this holds up to interpolation error, which is monitored, not
corrected.
"""

import numpy as np

from . import interp
from .errors import NumericalError


def force_at_nodes(e1n, e2n, bn, grid):
    """K(x, p) = E - perp(phat) B on the (node x momentum) grid.

    perp(phat) = (-phat2, phat1), so K1 = E1 + phat2*B, K2 = E2 - phat1*B.
    Returns two (nxn, nxn, np, np) arrays.
    """
    k1 = e1n[:, :, None, None] + grid.phat2[None, None, :, :] * bn[:, :, None, None]
    k2 = e2n[:, :, None, None] - grid.phat1[None, None, :, :] * bn[:, :, None, None]
    return k1, k2


def advect_x(f, grid, dt):
    """Free-streaming stage: f(x, p) <- f(x - dt*phat(p), p). Exact feet."""
    return interp.shift_x(f, dt * grid.phat1 / grid.dx, dt * grid.phat2 / grid.dx)


def _phat(p1, p2):
    gamma = np.sqrt(1.0 + p1 * p1 + p2 * p2)
    return p1 / gamma, p2 / gamma


def p_feet(e1n, e2n, bn, grid, dt):
    """RK2 backward feet of the p-characteristic dp/ds = K(x, p).

    Returns fractional momentum-grid indices (q1, q2) and the largest
    displacement in cell units.
    """
    p1 = grid.p_centers[:, None]
    p2 = grid.p_centers[None, :]
    e1 = e1n[:, :, None, None]
    e2 = e2n[:, :, None, None]
    b = bn[:, :, None, None]
    # half step to the midpoint
    k1 = e1 + grid.phat2[None, None] * b
    k2 = e2 - grid.phat1[None, None] * b
    pm1 = p1[None, None] - 0.5 * dt * k1
    pm2 = p2[None, None] - 0.5 * dt * k2
    vm1, vm2 = _phat(pm1, pm2)
    k1 = e1 + vm2 * b
    k2 = e2 - vm1 * b
    foot1 = p1[None, None] - dt * k1
    foot2 = p2[None, None] - dt * k2
    disp = max(
        float(np.max(np.abs(foot1 - p1[None, None]))),
        float(np.max(np.abs(foot2 - p2[None, None]))),
    ) / grid.dp
    q1 = (foot1 + grid.p_extent) / grid.dp - 0.5
    q2 = (foot2 + grid.p_extent) / grid.dp - 0.5
    return q1, q2, disp


def advect_p(f, grid, e1n, e2n, bn, dt, mode=interp.EXTEND_ZERO):
    q1, q2, disp = p_feet(e1n, e2n, bn, grid, dt)
    return interp.gather_p(f, q1, q2, mode), disp


def transport_step(f, grid, e1n, e2n, bn, dt, source=None,
                   mode=interp.EXTEND_ZERO, max_cell_fraction=1.0):
    """One Strang-split step of the (sourced) transport equation.

    e1n, e2n, bn: force fields at nodes, frozen at the step's half-time.
    source: optional (nxn, nxn, np, np) array, evaluated by the caller at the
    half-time; it is applied as dt/2 before and after the p-stage, which is
    the trapezoid rule along the characteristic (2nd order). dt may be
    negative (backward transport); the source carries the signed dt.

    Returns (f_new, info) with info the intermediate states needed by the
    coupled loops: f_a (after first x half-step), f_b (before last one), and
    the largest p-displacement in cell units.
    """
    f_a = advect_x(f, grid, 0.5 * dt)
    fp = f_a if source is None else f_a + (0.5 * dt) * source
    fp, disp = advect_p(fp, grid, e1n, e2n, bn, dt, mode)
    if disp > max_cell_fraction:
        raise NumericalError(
            f"p-advection displacement {disp:.3f} cells exceeds the "
            f"{max_cell_fraction:g}-cell bound; reduce dt or field amplitudes"
        )
    f_b = fp if source is None else fp + (0.5 * dt) * source
    f_new = advect_x(f_b, grid, 0.5 * dt)
    return f_new, (f_a, f_b, disp)


def escaped_mass(f, grid):
    """L1 mass sitting on the outermost momentum layer (should stay ~0)."""
    w = grid.dx**2 * grid.dp**2
    outer = (
        np.sum(np.abs(f[:, :, 0, :])) + np.sum(np.abs(f[:, :, -1, :]))
        + np.sum(np.abs(f[:, :, 1:-1, 0])) + np.sum(np.abs(f[:, :, 1:-1, -1]))
    )
    return float(outer * w)


def trace_characteristic(t_from, t_to, x, p, field_sampler, n_sub=None, dt_max=None):
    """Integrate dX/ds = phat(P), dP/ds = K(s, X, P) from t_from to t_to.

    field_sampler(t) must return node-sampled (e1n, e2n, bn); fields are
    bilinearly interpolated to the current position. Midpoint RK2 substeps.
    Returns (x', p'); raises if the momentum leaves the grid.
    """
    x = np.array(x, dtype=float)
    p = np.array(p, dtype=float)
    span = t_to - t_from
    if n_sub is None:
        if dt_max is None:
            raise ValueError("need n_sub or dt_max")
        n_sub = max(1, int(np.ceil(abs(span) / dt_max)))
    dt = span / n_sub
    grid = field_sampler.grid
    for k in range(n_sub):
        t = t_from + k * dt
        xm, pm = _rk2_stage(t, x, p, field_sampler, 0.5 * dt)
        x, p = _rk2_step(t + 0.5 * dt, x, p, xm, pm, field_sampler, dt)
        if np.max(np.abs(p)) > grid.p_extent:
            raise NumericalError(
                f"characteristic escaped the momentum box at t={t + dt:g}"
            )
    return x, p


def _sample_force(t, x, p, sampler):
    e1n, e2n, bn = sampler(t)
    grid = sampler.grid
    q1 = (x[0] + grid.x_extent) / grid.dx
    q2 = (x[1] + grid.x_extent) / grid.dx
    e1 = _bilinear(e1n, q1, q2)
    e2 = _bilinear(e2n, q1, q2)
    b = _bilinear(bn, q1, q2)
    v1, v2 = _phat(p[0], p[1])
    return np.array([e1 + v2 * b, e2 - v1 * b])


def _rk2_stage(t, x, p, sampler, half_dt):
    v1, v2 = _phat(p[0], p[1])
    xm = x + half_dt * np.array([v1, v2])
    pm = p + half_dt * _sample_force(t, x, p, sampler)
    return xm, pm


def _rk2_step(tm, x, p, xm, pm, sampler, dt):
    v1, v2 = _phat(pm[0], pm[1])
    x_new = x + dt * np.array([v1, v2])
    p_new = p + dt * _sample_force(tm, xm, pm, sampler)
    return x_new, p_new


def _bilinear(a, q1, q2):
    n1, n2 = a.shape
    i = int(np.clip(np.floor(q1), 0, n1 - 2))
    j = int(np.clip(np.floor(q2), 0, n2 - 2))
    s = q1 - i
    t = q2 - j
    return (
        (1 - s) * (1 - t) * a[i, j]
        + s * (1 - t) * a[i + 1, j]
        + (1 - s) * t * a[i, j + 1]
        + s * t * a[i + 1, j + 1]
    )


class ConstantFields:
    """Field sampler for time-independent node fields (tests, gyration runs)."""

    def __init__(self, grid, e1n=None, e2n=None, bn=None):
        self.grid = grid
        shape = (grid.nxn, grid.nxn)
        self.e1n = np.zeros(shape) if e1n is None else np.broadcast_to(e1n, shape)
        self.e2n = np.zeros(shape) if e2n is None else np.broadcast_to(e2n, shape)
        self.bn = np.zeros(shape) if bn is None else np.broadcast_to(bn, shape)

    def __call__(self, t):
        return self.e1n, self.e2n, self.bn
