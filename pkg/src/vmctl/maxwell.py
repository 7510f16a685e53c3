"""2D TE-mode Maxwell solver on the staggered Yee grid, plus oracles.

Leapfrog convention used throughout: e1/e2 live at integer time levels, b at
half-integer levels. One `step_fields` call advances e by a full step using
the current b, then b by a full step using the new e. The same routine runs
the adjoint field system (identical curl structure, extra b-row source) and,
with negative dt, the backward-in-time sweeps.

The discrete operators satisfy div(curl) = 0 exactly, so Gauss-law drift is
attributable purely to the deposited current (measured by
`divergence_residual`, never corrected).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .core import FieldState
from .errors import ConfigError, NumericalError

# stability bound for the 2D Yee scheme with c = 1
CFL_LIMIT = 1.0 / np.sqrt(2.0)


def check_cfl(grid):
    if grid.dt > CFL_LIMIT * grid.dx + 1e-15:
        raise ConfigError(
            f"dt={grid.dt:g} violates the staggered-scheme CFL bound "
            f"dx/sqrt(2)={CFL_LIMIT * grid.dx:g}"
        )


# --- stagger conversions ---------------------------------------------------

def nodes_to_e1(a):
    """Node field -> x1-edge midpoints, shape (nx, nx+1)."""
    return 0.5 * (a[:-1, :] + a[1:, :])


def nodes_to_e2(a):
    """Node field -> x2-edge midpoints, shape (nx+1, nx)."""
    return 0.5 * (a[:, :-1] + a[:, 1:])


def nodes_to_b(a):
    """Node field -> cell centers, shape (nx, nx)."""
    return 0.25 * (a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:])


def e1_to_nodes(e1):
    """x1-edge field -> nodes; one-sided copy on the outermost rows."""
    nxn = e1.shape[1]
    out = np.empty((nxn, nxn))
    out[1:-1, :] = 0.5 * (e1[:-1, :] + e1[1:, :])
    out[0, :] = e1[0, :]
    out[-1, :] = e1[-1, :]
    return out


def e2_to_nodes(e2):
    nxn = e2.shape[0]
    out = np.empty((nxn, nxn))
    out[:, 1:-1] = 0.5 * (e2[:, :-1] + e2[:, 1:])
    out[:, 0] = e2[:, 0]
    out[:, -1] = e2[:, -1]
    return out


def b_to_nodes(b):
    """Cell-center field -> nodes (4-point average, zero ghosts outside)."""
    nx = b.shape[0]
    bp = np.zeros((nx + 2, nx + 2))
    bp[1:-1, 1:-1] = b
    return 0.25 * (bp[:-1, :-1] + bp[1:, :-1] + bp[:-1, 1:] + bp[1:, 1:])


def fields_at_nodes(fields):
    return e1_to_nodes(fields.e1), e2_to_nodes(fields.e2), b_to_nodes(fields.b)


# --- discrete curl / div ----------------------------------------------------

def curl_z(e1, e2, dx):
    """(d_x1 e2 - d_x2 e1) at cell centers."""
    return (e2[1:, :] - e2[:-1, :]) / dx - (e1[:, 1:] - e1[:, :-1]) / dx


def divergence(fields, dx):
    """div E at nodes, zero ghost edges beyond the boundary."""
    e1, e2 = fields.e1, fields.e2
    nxn = e1.shape[1]
    e1p = np.zeros((e1.shape[0] + 2, nxn))
    e1p[1:-1, :] = e1
    e2p = np.zeros((nxn, e2.shape[1] + 2))
    e2p[:, 1:-1] = e2
    return (e1p[1:, :] - e1p[:-1, :]) / dx + (e2p[:, 1:] - e2p[:, :-1]) / dx


def vacuum_energy(fields, dx):
    """(1/2) integral of |E|^2 + B^2 (staggered midpoint quadrature)."""
    w = 0.5 * dx * dx
    return w * (
        np.sum(fields.e1**2) + np.sum(fields.e2**2) + np.sum(fields.b**2)
    )


def vacuum_energy_sync(e1, e2, b_prev, b_next, dx):
    """Leapfrog-invariant energy at an integer level: pairs adjacent b levels.

    (1/2)(|E^n|^2 + <B^{n-1/2}, B^{n+1/2}>); exactly conserved by the vacuum
    scheme, so any drift measures source/coupling errors only.
    """
    w = 0.5 * dx * dx
    return w * (np.sum(e1**2) + np.sum(e2**2) + np.sum(b_prev * b_next))


# --- time stepping ----------------------------------------------------------

def step_fields(fields, grid, src_e1=None, src_e2=None, src_b=None, dt=None):
    """One leapfrog update, in place.

    d_t e1 = d_x2 b + src_e1,   d_t e2 = -d_x1 b + src_e2,
    d_t b  = -(d_x1 e2 - d_x2 e1) + src_b.

    Sources live on the matching staggered points at the matching half/integer
    time levels (for the plasma problem src_e = -(j+U), src_b = 0). The
    outermost e values are pinned at zero; nothing reaches them for admissible
    runs (monitored elsewhere). Negative dt steps backward in time and swaps
    the update order (b first), making the backward step the exact inverse of
    the forward one: the scheme is time reversible, like the system itself.
    """
    if dt is None:
        dt = grid.dt
    if dt >= 0:
        update_e(fields, grid, src_e1, src_e2, dt)
        update_b(fields, grid, src_b, dt)
    else:
        update_b(fields, grid, src_b, dt)
        update_e(fields, grid, src_e1, src_e2, dt)
    return fields


def update_e(fields, grid, src_e1=None, src_e2=None, dt=None):
    """e-part of the leapfrog update (curl b + sources), in place."""
    if dt is None:
        dt = grid.dt
    dx = grid.dx
    e1, e2, b = fields.e1, fields.e2, fields.b
    e1[:, 1:-1] += dt * (b[:, 1:] - b[:, :-1]) / dx
    e2[1:-1, :] += dt * -(b[1:, :] - b[:-1, :]) / dx
    if src_e1 is not None:
        e1[:, 1:-1] += dt * src_e1[:, 1:-1]
        e2[1:-1, :] += dt * src_e2[1:-1, :]
    return fields


def update_b(fields, grid, src_b=None, dt=None):
    """b-part of the leapfrog update (-curl_z e + source), in place."""
    if dt is None:
        dt = grid.dt
    fields.b[...] -= dt * curl_z(fields.e1, fields.e2, grid.dx)
    if src_b is not None:
        fields.b[...] += dt * src_b
    return fields


def start_b_half(fields, grid, src_b=None, dt=None):
    """Move b from the integer start level to the first half level."""
    if dt is None:
        dt = grid.dt
    fields.b -= 0.5 * dt * curl_z(fields.e1, fields.e2, grid.dx)
    if src_b is not None:
        fields.b += 0.5 * dt * src_b
    return fields


@dataclass
class MaxwellSource:
    """Plasma current plus assembled external control current, at nodes."""

    j1: np.ndarray
    j2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    def edge_sources(self):
        s1 = -nodes_to_e1(self.j1 + self.u1)
        s2 = -nodes_to_e2(self.j2 + self.u2)
        return s1, s2


def maxwell_step(fields, grid, src, dt=None):
    """Advance (E, B) one leapfrog step with plasma + control currents."""
    s1, s2 = src.edge_sources()
    return step_fields(fields, grid, s1, s2, None, dt)


def external_field_solve(model, u, grid, store_b_sync=True):
    """Fields generated by the control alone: zero data, source -U.

    Returns (e1s, e2s, bs): arrays with e at integer times 0..nt and, when
    store_b_sync, b averaged back to integer times (b[0] = 0 initial datum).
    """
    check_cfl(grid)
    nt = grid.nt
    fields = FieldState.zeros(grid)
    e1s = np.zeros((nt + 1,) + fields.e1.shape)
    e2s = np.zeros((nt + 1,) + fields.e2.shape)
    bs = np.zeros((nt + 1,) + fields.b.shape)
    start_b_half(fields, grid)  # zero data: stays zero
    b_prev = fields.b.copy()
    for n in range(nt):
        uu = model.assemble(u[:, n])
        s1 = -nodes_to_e1(uu[0])
        s2 = -nodes_to_e2(uu[1])
        step_fields(fields, grid, s1, s2)
        e1s[n + 1] = fields.e1
        e2s[n + 1] = fields.e2
        if store_b_sync:
            bs[n + 1] = 0.5 * (b_prev + fields.b)
        b_prev = fields.b.copy()
    return e1s, e2s, bs


# --- Gauss law --------------------------------------------------------------

def divergence_residual(fields, rho, div_u_accum, grid, background=None):
    """L2 norm of div E - (rho - background) + int_0^t div U dtau, at nodes."""
    res = divergence(fields, grid.dx) - rho + div_u_accum
    if background is not None:
        res += background
    return float(np.sqrt(np.sum(res**2)) * grid.dx)


def div_edges_at_nodes(u1_edges, u2_edges, dx):
    """Discrete divergence of edge-sampled vector field, matching `divergence`."""
    nxn = u1_edges.shape[1]
    e1p = np.zeros((u1_edges.shape[0] + 2, nxn))
    e1p[1:-1, :] = u1_edges
    e2p = np.zeros((nxn, u2_edges.shape[1] + 2))
    e2p[:, 1:-1] = u2_edges
    return (e1p[1:, :] - e1p[:-1, :]) / dx + (e2p[:, 1:] - e2p[:, :-1]) / dx


# --- compatible initialization (condition div E(0) = rho(0)) -----------------

def poisson_cc_init(rho, grid, tol=1e-10):
    """Construct E0 = -grad(phi) with div E0 = rho - mean(rho) discretely.

    Five-point Laplacian with zero-Dirichlet boundary, conjugate gradients.
    The subtracted mean stands in for a uniform neutralizing background and
    is returned alongside the field.
    """
    nx = grid.nx
    mean = float(np.mean(rho))
    rhs = (rho - mean)[1:-1, 1:-1].ravel()
    n = nx - 1
    lap1 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n))
    eye = sp.identity(n)
    lap = (sp.kron(lap1, eye) + sp.kron(eye, lap1)) / grid.dx**2
    phi_int, info = cg(-lap, rhs, rtol=0.0, atol=tol * max(np.linalg.norm(rhs), 1e-300), maxiter=20000)
    if info != 0:
        raise NumericalError(f"Poisson CG did not converge (info={info})")
    phi = np.zeros((nx + 1, nx + 1))
    phi[1:-1, 1:-1] = phi_int.reshape(n, n)
    e1 = -(phi[1:, :] - phi[:-1, :]) / grid.dx
    e2 = -(phi[:, 1:] - phi[:, :-1]) / grid.dx
    fields = FieldState(e1=e1, e2=e2, b=np.zeros((nx, nx)))
    return fields, mean


# --- retarded-integral oracle for the 2D wave equation ----------------------

def wave_oracle(source, t, x, g=None, h=None, grad_g=None,
                n_radial=64, n_theta=64, n_tau=None):
    """Solution of d_t^2 u - Lap u = source with data (g, h), evaluated at (t, x).

    Quadrature of the retarded integral with the interior-disc singularity
    removed by the radial substitution s = sqrt((t-tau)^2 - r^2):

        u = (1/2pi) int_0^t int_0^2pi int_0^(t-tau)
              source(tau, x + sqrt((t-tau)^2 - s^2) * omega)  ds dtheta dtau
            + data term over the unit disc (same substitution).

    source(tau, y1, y2) must accept array arguments. With source = 1 and zero
    data the result is t^2/2 exactly (up to quadrature round-off).
    """
    x = np.asarray(x, dtype=float)
    # Gauss-Legendre nodes on [0, 1]
    gl_x, gl_w = np.polynomial.legendre.leggauss(n_radial)
    gl_x = 0.5 * (gl_x + 1.0)
    gl_w = 0.5 * gl_w
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    w_theta = 2.0 * np.pi / n_theta
    omega1 = np.cos(theta)
    omega2 = np.sin(theta)

    total = 0.0
    if t > 0:
        if n_tau is None:
            n_tau = max(32, 4 * n_radial)
        tau = np.linspace(0.0, t, n_tau + 1)
        w_tau = np.full(n_tau + 1, t / n_tau)
        w_tau[0] *= 0.5
        w_tau[-1] *= 0.5
        # r = sqrt(dtsq - s^2), s on (0, t - tau): smooth integrand
        dt_ret = t - tau  # (n_tau+1,)
        s = dt_ret[:, None] * gl_x[None, :]  # (n_tau+1, n_radial)
        r = np.sqrt(np.maximum(dt_ret[:, None] ** 2 - s**2, 0.0))
        y1 = x[0] + r[:, :, None] * omega1[None, None, :]
        y2 = x[1] + r[:, :, None] * omega2[None, None, :]
        vals = source(tau[:, None, None], y1, y2)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), y1.shape)
        inner = np.sum(vals * gl_w[None, :, None], axis=1) * dt_ret[:, None]
        total += np.sum(np.sum(inner, axis=1) * w_theta * w_tau) / (2.0 * np.pi)

    if g is not None or h is not None:
        # data term: y = r*omega over the unit disc, weight 1/sqrt(1-r^2)
        s = gl_x
        r = np.sqrt(np.maximum(1.0 - s**2, 0.0))
        y1 = x[0] + t * r[:, None] * omega1[None, :]
        y2 = x[1] + t * r[:, None] * omega2[None, :]
        acc = np.zeros_like(y1)
        if g is not None:
            acc += np.broadcast_to(np.asarray(g(y1, y2), dtype=float), y1.shape)
            if grad_g is None:
                eps = 1e-6
                gx = (np.asarray(g(y1 + eps, y2)) - np.asarray(g(y1 - eps, y2))) / (2 * eps)
                gy = (np.asarray(g(y1, y2 + eps)) - np.asarray(g(y1, y2 - eps))) / (2 * eps)
            else:
                gx, gy = grad_g(y1, y2)
            acc += t * (gx * r[:, None] * omega1[None, :] + gy * r[:, None] * omega2[None, :])
        if h is not None:
            acc += t * np.broadcast_to(np.asarray(h(y1, y2), dtype=float), y1.shape)
        total += np.sum(acc * gl_w[:, None]) * w_theta / (2.0 * np.pi)
    return float(total)
