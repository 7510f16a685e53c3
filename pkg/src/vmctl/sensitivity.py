"""Tangent and adjoint solves for the reduced tracking objective, gradient
assembly, and the finite-difference oracle.

The tangent system is the linearization of the coupled system around a
stored base run: same transport and field updates with frozen base
coefficients, driven by the control perturbation, with the extra Vlasov
source -(dE - perp(phat) dB) . grad_p f.

The adjoint system evolves (g, h1, h2, h3) backward from zero final data:

    d_t g + phat . d_x g + K . d_p g = 4 pi (phat1 h1 + phat2 h2)
                                       + 4 pi (rho_f - rho_d),
    d_t h1 - d_x2 h3 =  int g d_p1 f dp,
    d_t h2 + d_x1 h3 =  int g d_p2 f dp,
    d_t h3 + d_x1 h2 - d_x2 h1 = -int g perp(phat) . d_p f dp,

discretized with the same staggered leapfrog and semi-Lagrangian machinery
run in reverse (the system is time reversible). g is not compactly
supported in momentum, so its p-advection uses the zero-gradient (clamp)
extension; the h sources carry d_p f, which vanishes near the box edge, so
the moment quadrature truncates safely.

The continuous gradient representation is

    dphi(u) du = int_0^T int (dU1 h1 + dU2 h2) dx dt + regularization terms;

the regularization part is assembled as the exact transpose of the discrete
difference quotients used by the objective, so that piece matches finite
differences to round-off.
"""

from dataclasses import dataclass, field

import numpy as np

from . import core, forward, maxwell, vlasov
from .core import FOURPI, FieldState
from .errors import ConfigError
from .interp import EXTEND_CLAMP


def dp_derivatives(f, dp):
    """4th-order centered momentum derivatives, zero extension outside."""
    fp = np.zeros_like(f)
    c = 1.0 / (12.0 * dp)
    fp[:, :, 2:-2, :] = c * (
        -f[:, :, 4:, :] + 8 * f[:, :, 3:-1, :] - 8 * f[:, :, 1:-3, :] + f[:, :, :-4, :]
    )
    fp[:, :, 1, :] = c * (-f[:, :, 3, :] + 8 * f[:, :, 2, :] - 8 * f[:, :, 0, :])
    fp[:, :, 0, :] = c * (-f[:, :, 2, :] + 8 * f[:, :, 1, :])
    fp[:, :, -2, :] = c * (f[:, :, -4, :] - 8 * f[:, :, -3, :] + 8 * f[:, :, -1, :])
    fp[:, :, -1, :] = c * (f[:, :, -3, :] - 8 * f[:, :, -2, :])
    fq = np.zeros_like(f)
    fq[:, :, :, 2:-2] = c * (
        -f[:, :, :, 4:] + 8 * f[:, :, :, 3:-1] - 8 * f[:, :, :, 1:-3] + f[:, :, :, :-4]
    )
    fq[:, :, :, 1] = c * (-f[:, :, :, 3] + 8 * f[:, :, :, 2] - 8 * f[:, :, :, 0])
    fq[:, :, :, 0] = c * (-f[:, :, :, 2] + 8 * f[:, :, :, 1])
    fq[:, :, :, -2] = c * (f[:, :, :, -4] - 8 * f[:, :, :, -3] + 8 * f[:, :, :, -1])
    fq[:, :, :, -1] = c * (f[:, :, :, -3] - 8 * f[:, :, :, -2])
    return fp, fq


def _moment(values, weight, dp2):
    """Momentum integral of values*weight at every node; weight may be None."""
    if weight is None:
        return np.sum(values, axis=(2, 3)) * dp2
    return np.tensordot(values, weight, axes=([2, 3], [0, 1])) * dp2 \
        if weight.ndim == 2 else np.sum(values * weight, axis=(2, 3)) * dp2


def solve_tangent(base, model, du):
    """Tangent (linearized) solve along a stored base run.

    base: ForwardOutput with snapshots; du: (N, nt) control perturbation.
    Returns drho: (nt+1, nxn, nxn), the charge-density perturbation series.
    """
    grid = base.grid
    store = base.snapshots
    if store is None:
        raise ConfigError("tangent solve needs a base run with snapshots")
    nt, dt = grid.nt, grid.dt
    df = grid.zero_distribution()
    dfields = FieldState.zeros(grid)
    drho = np.zeros((nt + 1, grid.nxn, grid.nxn))
    for n in range(nt):
        e1n, e2n, bn = store.mid_fields(n)
        df_a = vlasov.advect_x(df, grid, 0.5 * dt)
        dj1a, dj2a = core.current_density(df_a, grid)
        duu = model.assemble(du[:, n])
        # predicted half-step tangent e for the source term
        dhalf = FieldState(dfields.e1.copy(), dfields.e2.copy(), dfields.b)
        maxwell.update_e(
            dhalf, grid,
            -maxwell.nodes_to_e1(dj1a + duu[0]),
            -maxwell.nodes_to_e2(dj2a + duu[1]),
            0.5 * dt,
        )
        de1n = maxwell.e1_to_nodes(dhalf.e1)
        de2n = maxwell.e2_to_nodes(dhalf.e2)
        dbn = maxwell.b_to_nodes(dfields.b)
        fp1, fp2 = dp_derivatives(store.get_f_mid(n), grid.dp)
        src = -(
            (de1n[:, :, None, None] + grid.phat2[None, None] * dbn[:, :, None, None]) * fp1
            + (de2n[:, :, None, None] - grid.phat1[None, None] * dbn[:, :, None, None]) * fp2
        )
        dfp = df_a + (0.5 * dt) * src
        dfp, _ = vlasov.advect_p(dfp, grid, e1n, e2n, bn, dt)
        df_b = dfp + (0.5 * dt) * src
        df = vlasov.advect_x(df_b, grid, 0.5 * dt)
        dj1b, dj2b = core.current_density(df_b, grid)
        maxwell.update_e(
            dfields, grid,
            -maxwell.nodes_to_e1(0.5 * (dj1a + dj1b) + duu[0]),
            -maxwell.nodes_to_e2(0.5 * (dj2a + dj2b) + duu[1]),
            dt,
        )
        maxwell.update_b(dfields, grid, None, dt)
        drho[n + 1] = core.charge_density(df, grid)
    return drho


def tracking_pairing(rho, rho_d, drho, grid):
    """<rho_f - rho_d, rho_df> over [0, T] x R^2 (same trapezoid weights as
    the objective), i.e. the tangent-side directional derivative of the
    tracking term."""
    w = np.full(rho.shape[0], grid.dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    per = np.sum((rho - rho_d) * drho, axis=(1, 2)) * grid.dx**2
    return float(np.sum(per * w))


@dataclass
class AdjointOutput:
    kernel: np.ndarray  # (N, nt): int z_j . h dx at half-steps
    final_g: np.ndarray
    final_h: FieldState


def solve_adjoint(base, rho_d, model):
    """Backward adjoint sweep; returns the control-pairing kernel.

    kernel[j, k] approximates int z_j . h(t_{k+1/2}, x) dx, the time density
    of the tracking part of the gradient.
    """
    grid = base.grid
    store = base.snapshots
    if store is None:
        raise ConfigError("adjoint solve needs a base run with snapshots")
    nt, dt, dp2 = grid.nt, grid.dt, grid.dp**2
    track_src = FOURPI * (base.rho - rho_d)  # integer-level source series
    g = grid.zero_distribution()
    h = FieldState.zeros(grid)  # h1, h2 at integer levels; h.b = h3 at half
    n_coils = model.n_coils
    z_e1 = [maxwell.nodes_to_e1(model.profiles[j, 0]) for j in range(n_coils)]
    z_e2 = [maxwell.nodes_to_e2(model.profiles[j, 1]) for j in range(n_coils)]
    kernel = np.zeros((n_coils, nt))
    phat1 = grid.phat1[None, None]
    phat2 = grid.phat2[None, None]
    w = grid.dx**2

    for k in range(nt - 1, -1, -1):
        e1n, e2n, bn = store.mid_fields(k)
        f_mid = store.get_f_mid(k)
        fp1, fp2 = dp_derivatives(f_mid, grid.dp)
        h1_next = h.e1.copy()
        h2_next = h.e2.copy()
        # backward transport of g with the mid-level sources
        g_a = vlasov.advect_x(g, grid, -0.5 * dt)
        s1_a = np.sum(g_a * fp1, axis=(2, 3)) * dp2
        s2_a = np.sum(g_a * fp2, axis=(2, 3)) * dp2
        hhalf = FieldState(h.e1.copy(), h.e2.copy(), h.b)
        maxwell.update_e(
            hhalf, grid,
            maxwell.nodes_to_e1(s1_a), maxwell.nodes_to_e2(s2_a), -0.5 * dt,
        )
        h1n = maxwell.e1_to_nodes(hhalf.e1)
        h2n = maxwell.e2_to_nodes(hhalf.e2)
        src_g = FOURPI * (h1n[:, :, None, None] * phat1 + h2n[:, :, None, None] * phat2) \
            + 0.5 * (track_src[k] + track_src[k + 1])[:, :, None, None]
        gp = g_a + (-0.5 * dt) * src_g
        gp, _ = vlasov.advect_p(gp, grid, e1n, e2n, bn, -dt, mode=EXTEND_CLAMP)
        g_b = gp + (-0.5 * dt) * src_g
        g = vlasov.advect_x(g_b, grid, -0.5 * dt)
        # h-field updates with the g-moment sources
        g_bar = 0.5 * (g_a + g_b)
        s1 = np.sum(g_bar * fp1, axis=(2, 3)) * dp2
        s2 = np.sum(g_bar * fp2, axis=(2, 3)) * dp2
        maxwell.update_e(
            h, grid, maxwell.nodes_to_e1(s1), maxwell.nodes_to_e2(s2), -dt,
        )
        fk1, fk2 = dp_derivatives(store.get_f(k), grid.dp)
        s3_nodes = -np.sum(g * (-phat2 * fk1 + phat1 * fk2), axis=(2, 3)) * dp2
        maxwell.update_b(h, grid, maxwell.nodes_to_b(s3_nodes), -dt)
        for j in range(n_coils):
            kernel[j, k] = (
                np.sum(z_e1[j] * 0.5 * (h.e1 + h1_next))
                + np.sum(z_e2[j] * 0.5 * (h.e2 + h2_next))
            ) * w
    return AdjointOutput(kernel=kernel, final_g=g, final_h=h)


def assemble_gradient(adjoint, u, model, grid, beta, beta1, beta2):
    """Euclidean gradient of the discrete objective w.r.t. the u[j][k].

    Tracking part: dt * kernel (midpoint quadrature of the continuous
    pairing); regularization part: exact transpose of the objective's
    difference quotients.
    """
    grad = grid.dt * adjoint.kernel
    grad = grad + forward.regularization_gradient(
        u, model, grid.dt, beta, beta1, beta2
    )
    return grad


# --- problem bundle -----------------------------------------------------------

@dataclass
class ControlProblem:
    """Reduced objective phi(u) and its adjoint gradient for fixed data."""

    grid: object
    init: object
    model: object
    rho_d: np.ndarray
    beta: float
    beta1: float = 0.0
    beta2: float = 0.0
    track: bool = True  # False: regularization-only objective
    opts: forward.ForwardOptions = field(default_factory=forward.ForwardOptions)

    def solve(self, u, snapshots=True):
        opts = self.opts
        if opts.store_snapshots != snapshots:
            opts = forward.ForwardOptions(**{**opts.__dict__,
                                             "store_snapshots": snapshots})
        return forward.run_forward(self.init, self.model, u, self.grid, opts)

    def objective(self, u, out=None):
        if out is None:
            out = self.solve(u, snapshots=False)
        reg = forward.regularization_term(
            u, self.model, self.grid.dt, self.beta, self.beta1, self.beta2
        )
        track = forward.tracking_term(out.rho, self.rho_d, self.grid) if self.track else 0.0
        return track + reg, track, reg

    def gradient(self, u, out=None):
        """Adjoint gradient; returns (grad, objective parts, base run)."""
        if out is None or out.snapshots is None:
            out = self.solve(u, snapshots=True)
        if self.track:
            adj = solve_adjoint(out, self.rho_d, self.model)
            grad = assemble_gradient(adj, u, self.model, self.grid,
                                     self.beta, self.beta1, self.beta2)
        else:
            grad = forward.regularization_gradient(
                u, self.model, self.grid.dt, self.beta, self.beta1, self.beta2
            )
        value, track, reg = self.objective(u, out=out)
        return grad, (value, track, reg), out


def fd_gradient(problem, u, direction, eps):
    """Central difference (phi(u+eps d) - phi(u-eps d)) / (2 eps)."""
    fp, _, _ = problem.objective(u + eps * direction)
    fm, _, _ = problem.objective(u - eps * direction)
    return (fp - fm) / (2.0 * eps)


def fd_sweep(problem, u, direction, eps_values, grad=None):
    """FD values and relative errors across an epsilon sweep.

    Returns rows (eps, fd, adjoint, rel_err) for the gradcheck CSV; the
    characteristic V-shape locates the truncation/cancellation plateau.
    """
    if grad is None:
        grad, _, _ = problem.gradient(u)
    directional = float(np.sum(grad * direction))
    rows = []
    for eps in eps_values:
        fd = fd_gradient(problem, u, direction, eps)
        rel = abs(fd - directional) / max(abs(fd), 1e-300)
        rows.append((eps, fd, directional, rel))
    return rows


def duality_gap(base, rho_d, model, du, grid):
    """Tangent-vs-adjoint consistency on the tracking pairing.

    tangent side: <rho - rho_d, rho_df>; adjoint side: int int dU . h dx dt.
    Returns (tangent_value, adjoint_value, relative gap).
    """
    drho = solve_tangent(base, model, du)
    t_val = tracking_pairing(base.rho, rho_d, drho, grid)
    adj = solve_adjoint(base, rho_d, model)
    a_val = float(np.sum(grid.dt * adj.kernel * du))
    denom = max(abs(t_val), abs(a_val), 1e-300)
    return t_val, a_val, abs(t_val - a_val) / denom
