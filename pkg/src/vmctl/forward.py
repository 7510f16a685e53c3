"""Coupled time loop for the controlled Vlasov-Maxwell system, diagnostics,
and the tracking-plus-regularization objective.

Time layout per step n (f, e at t_n; b at t_{n+1/2}; u_j at t_{n+1/2}):

    1. half x-advection of f
    2. predict e at t_{n+1/2} from the half-advected current, assemble the
       force K = E - perp(phat) B at nodes (time-centered coupling)
    3. full p-advection, second half x-advection
    4. deposit the time-centered current j^{n+1/2} = (j(f_a) + j(f_b))/2
    5. leapfrog field update with -(j + U) on the e rows

Diagnostics are recorded at integer levels; all reductions are plain numpy
sums in fixed order, so reruns are bit-identical for any thread count.
"""

from dataclasses import dataclass, field

import numpy as np

from . import core, maxwell, vlasov
from .core import FieldState
from .errors import NumericalError

SNAPSHOT_DTYPE = np.float32


class SnapshotStore:
    """Per-step storage needed to replay a run: f and the node force fields.

    f snapshots are kept in float32 (relative 1e-7 noise, far below the
    gradient-check tolerances); mid-step force fields are small and stay
    float64. stride > 1 stores every stride-th f and reconstructs the rest
    by linear interpolation in time (documented accuracy cost).
    """

    def __init__(self, grid, stride=1):
        self.grid = grid
        self.stride = int(stride)
        self._f = {}
        self._mid = {}
        self.nt = grid.nt

    def put_f(self, k, f):
        if k % self.stride == 0 or k == self.nt:
            self._f[k] = np.asarray(f, dtype=SNAPSHOT_DTYPE)

    def get_f(self, k):
        if k in self._f:
            return np.asarray(self._f[k], dtype=float)
        lo = (k // self.stride) * self.stride
        hi = min(lo + self.stride, self.nt)
        w = (k - lo) / (hi - lo)
        return (1 - w) * np.asarray(self._f[lo], dtype=float) + w * np.asarray(
            self._f[hi], dtype=float
        )

    def get_f_mid(self, n):
        """f at t_{n+1/2} (average of the bracketing levels)."""
        return 0.5 * (self.get_f(n) + self.get_f(n + 1))

    def put_mid_fields(self, n, e1n, e2n, bn):
        self._mid[n] = (e1n.copy(), e2n.copy(), bn.copy())

    def mid_fields(self, n):
        return self._mid[n]


@dataclass
class ForwardOptions:
    store_snapshots: bool = True
    snapshot_stride: int = 1
    coupling: bool = True  # False: fields frozen at their initial values
    escape_tol: float = 1e-8
    max_cell_fraction: float = 1.0
    rp_abort_fraction: float = 0.9
    boundary_tol: float = 1e-8
    external: tuple = None  # (e1s, e2s, bs) from external_field_solve


DIAG_COLUMNS = [
    "t", "mass", "l1", "l2", "linf", "min_f", "field_energy",
    "kinetic_energy", "total_energy", "internal_energy", "ext_work",
    "gauss_residual", "support_x", "support_p", "max_force",
    "force_integral", "boundary_fields", "boundary_f", "escaped_mass",
]


@dataclass
class DiagnosticRecord:
    """Per-step time series, one row per integer level 0..nt."""

    data: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    def rows(self):
        n = len(self.data["t"])
        for i in range(n):
            yield {k: self.data[k][i] for k in DIAG_COLUMNS}

    @classmethod
    def allocate(cls, nt):
        return cls({k: np.zeros(nt + 1) for k in DIAG_COLUMNS})

    def set(self, i, **kw):
        for k, v in kw.items():
            self.data[k][i] = v


@dataclass
class ForwardOutput:
    grid: object
    rho: np.ndarray  # (nt+1, nxn, nxn)
    diagnostics: DiagnosticRecord
    snapshots: SnapshotStore
    final_f: np.ndarray
    final_fields: FieldState
    background: np.ndarray
    u: np.ndarray


def _require_finite(step, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite values in state", step=step)


def run_forward(init, model, u, grid, opts=None):
    """Run the coupled system on [0, T]; returns ForwardOutput.

    init: InitialData; model/u: ControlModel and (N, nt) intensities at
    half-steps, or both None for the uncontrolled system.
    """
    opts = opts or ForwardOptions()
    if opts.coupling:
        maxwell.check_cfl(grid)
    nt, dt, dx = grid.nt, grid.dt, grid.dx
    controlled = model is not None and u is not None and np.any(u != 0.0)
    if u is not None and not core.feasible(u):
        # the forward solve itself tolerates infeasible u; the optimizer projects
        import warnings

        warnings.warn("control trajectory violates |u| <= 1", stacklevel=2)

    f = init.f0.copy()
    fields = FieldState(init.fields0.e1.copy(), init.fields0.e2.copy(),
                        init.fields0.b.copy())
    b_int = fields.b.copy()  # b at t=0 for synchronized diagnostics
    if opts.coupling:
        maxwell.start_b_half(fields, grid)

    store = SnapshotStore(grid, opts.snapshot_stride) if opts.store_snapshots else None
    diag = DiagnosticRecord.allocate(nt)
    rho_series = np.zeros((nt + 1, grid.nxn, grid.nxn))
    div_u_accum = np.zeros((grid.nxn, grid.nxn))
    m0 = core.lq_norm(f, grid, 1)
    escaped_total = 0.0
    force_integral = 0.0
    zero_nodes = np.zeros((grid.nxn, grid.nxn))

    ext = opts.external
    if ext is None and not controlled:
        ext_zero = True
    else:
        ext_zero = ext is None

    def record(level, b_sync, max_force):
        rho = core.charge_density(f, grid)
        rho_series[level] = rho
        j1, j2 = core.current_density(f, grid)
        kin = np.sum(core.kinetic_energy_density(f, grid)) * dx * dx
        fe = 0.5 * (np.sum(fields.e1**2) + np.sum(fields.e2**2)
                    + np.sum(b_sync**2)) * dx * dx
        if ext_zero:
            e_int = fe + kin
            work = 0.0
        elif ext is not None:
            de1 = fields.e1 - ext[0][level]
            de2 = fields.e2 - ext[1][level]
            dbs = b_sync - ext[2][level]
            e_int = 0.5 * (np.sum(de1**2) + np.sum(de2**2)
                           + np.sum(dbs**2)) * dx * dx + kin
            work = (
                np.sum(ext[0][level] * maxwell.nodes_to_e1(j1))
                + np.sum(ext[1][level] * maxwell.nodes_to_e2(j2))
            ) * dx * dx
        else:
            e_int = np.nan
            work = np.nan
        gauss = maxwell.divergence_residual(
            fields, rho, div_u_accum, grid, background=init.background
        )
        rx, rp = core.support_radii(f, grid)
        bmax = fields.boundary_max()
        diag.set(
            level, t=level * dt,
            mass=float(np.sum(f)) * grid.dx**2 * grid.dp**2,
            l1=core.lq_norm(f, grid, 1),
            l2=core.lq_norm(f, grid, 2), linf=core.lq_norm(f, grid, np.inf),
            min_f=float(f.min()), field_energy=fe, kinetic_energy=kin,
            total_energy=fe + kin, internal_energy=e_int, ext_work=work,
            gauss_residual=gauss, support_x=rx, support_p=rp,
            max_force=max_force, force_integral=force_integral,
            boundary_fields=bmax, boundary_f=core.distribution_boundary_max(f),
            escaped_mass=escaped_total,
        )
        if bmax > opts.boundary_tol:
            raise NumericalError(
                f"fields reached the boundary layer (max {bmax:.2e} > "
                f"{opts.boundary_tol:g}); domain too small for this run",
                step=level,
            )
        if rp > opts.rp_abort_fraction * grid.p_extent:
            raise NumericalError(
                f"momentum support radius {rp:.3f} beyond "
                f"{opts.rp_abort_fraction:g} * p_extent; enlarge the box",
                step=level,
            )

    if store is not None:
        store.put_f(0, f)
    record(0, b_int, 0.0)

    for n in range(nt):
        # 1. half x-advection
        f_a = vlasov.advect_x(f, grid, 0.5 * dt)
        j1a, j2a = core.current_density(f_a, grid)
        if model is not None and u is not None:
            uu = model.assemble(u[:, n])
            u1, u2 = uu[0], uu[1]
        else:
            u1 = u2 = zero_nodes
        # 2. predicted half-step e for the force
        if opts.coupling:
            ehalf = FieldState(fields.e1.copy(), fields.e2.copy(), fields.b)
            maxwell.update_e(
                ehalf, grid,
                -maxwell.nodes_to_e1(j1a + u1), -maxwell.nodes_to_e2(j2a + u2),
                0.5 * dt,
            )
            e1n = maxwell.e1_to_nodes(ehalf.e1)
            e2n = maxwell.e2_to_nodes(ehalf.e2)
            bn = maxwell.b_to_nodes(fields.b)
        else:
            e1n = maxwell.e1_to_nodes(fields.e1)
            e2n = maxwell.e2_to_nodes(fields.e2)
            bn = maxwell.b_to_nodes(fields.b)
        if store is not None:
            store.put_mid_fields(n, e1n, e2n, bn)
        k1, k2 = vlasov.force_at_nodes(e1n, e2n, bn, grid)
        max_force = float(np.sqrt(np.max(k1 * k1 + k2 * k2)))
        force_integral += dt * max_force
        # 3. p-advection between the two x half-steps
        fp, disp = vlasov.advect_p(f_a, grid, e1n, e2n, bn, dt)
        if disp > opts.max_cell_fraction:
            raise NumericalError(
                f"p-displacement {disp:.3f} cells > {opts.max_cell_fraction:g}",
                step=n,
            )
        f = vlasov.advect_x(fp, grid, 0.5 * dt)
        escaped_total += vlasov.escaped_mass(fp, grid)
        if m0 > 0 and escaped_total > opts.escape_tol * m0:
            raise NumericalError(
                f"escaped momentum-boundary mass {escaped_total:.2e} exceeds "
                f"{opts.escape_tol:g} of the initial mass",
                step=n,
            )
        # 4.-5. field update with the time-centered current
        b_prev = fields.b.copy()
        if opts.coupling:
            j1b, j2b = core.current_density(fp, grid)
            j1h = 0.5 * (j1a + j1b)
            j2h = 0.5 * (j2a + j2b)
            u1e = maxwell.nodes_to_e1(u1)
            u2e = maxwell.nodes_to_e2(u2)
            maxwell.update_e(
                fields, grid,
                -(maxwell.nodes_to_e1(j1h) + u1e), -(maxwell.nodes_to_e2(j2h) + u2e),
                dt,
            )
            maxwell.update_b(fields, grid, None, dt)
            div_u_accum += dt * maxwell.div_edges_at_nodes(u1e, u2e, dx)
        _require_finite(n, f, fields.e1, fields.e2, fields.b)
        if store is not None:
            store.put_f(n + 1, f)
        b_sync = 0.5 * (b_prev + fields.b) if opts.coupling else fields.b
        record(n + 1, b_sync, max_force)

    return ForwardOutput(
        grid=grid, rho=rho_series, diagnostics=diag, snapshots=store,
        final_f=f, final_fields=fields, background=init.background, u=u,
    )


# --- energy identity ----------------------------------------------------------

def energy_identity_residual(diag, dt):
    """Residual of d/dt (internal energy) = external work, at levels 1..nt-1.

    Central time differences; the flux term vanishes by compact support.
    Returns (residual series, work series) on the interior levels.
    """
    e_int = diag["internal_energy"]
    work = diag["ext_work"]
    dres = (e_int[2:] - e_int[:-2]) / (2 * dt) - work[1:-1]
    return dres, work[1:-1]


# --- objective ------------------------------------------------------------------

def control_derivative_matrices(nt, dt):
    """Forward-difference D1 ((nt-1) x nt) and second-difference D2 ((nt-2) x nt)."""
    d1 = (np.eye(nt - 1, nt, 1) - np.eye(nt - 1, nt)) / dt
    d2 = (np.eye(nt - 2, nt, 2) - 2 * np.eye(nt - 2, nt, 1) + np.eye(nt - 2, nt)) / dt**2
    return d1, d2


def regularization_term(u, model, dt, beta, beta1, beta2):
    """(beta/2) sum_j c_j (||u_j||^2 + beta1 ||d_t u_j||^2 + beta2 ||d_t^2 u_j||^2).

    Discrete L2 norms on the half-step grid (midpoint rule); derivatives by
    forward and second differences.
    """
    nt = u.shape[1]
    d1, d2 = control_derivative_matrices(nt, dt)
    total = 0.0
    for j in range(u.shape[0]):
        uj = u[j]
        total += model.c[j] * (
            np.sum(uj**2) * dt
            + beta1 * np.sum((d1 @ uj) ** 2) * dt
            + beta2 * np.sum((d2 @ uj) ** 2) * dt
        )
    return 0.5 * beta * total


def regularization_gradient(u, model, dt, beta, beta1, beta2):
    """Exact Euclidean gradient of `regularization_term` w.r.t. the u[j][k]."""
    nt = u.shape[1]
    d1, d2 = control_derivative_matrices(nt, dt)
    grad = np.zeros_like(u)
    for j in range(u.shape[0]):
        uj = u[j]
        grad[j] = beta * model.c[j] * dt * (
            uj + beta1 * (d1.T @ (d1 @ uj)) + beta2 * (d2.T @ (d2 @ uj))
        )
    return grad


def tracking_term(rho, rho_d, grid):
    """(1/2) ||rho_f - rho_d||^2 over [0, T] x R^2 (trapezoid x node sum)."""
    diff = rho - rho_d
    per_level = 0.5 * np.sum(diff * diff, axis=(1, 2)) * grid.dx**2
    w = np.full(rho.shape[0], grid.dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    return float(np.sum(per_level * w))


def objective_eval(rho, rho_d, u, model, grid, beta, beta1, beta2):
    """Tracking plus regularization; rho/rho_d: (nt+1, nxn, nxn); u: (N, nt)."""
    if rho.shape != rho_d.shape:
        raise ValueError(
            f"rho series shape {rho.shape} does not match rho_d {rho_d.shape}"
        )
    track = tracking_term(rho, rho_d, grid)
    reg = regularization_term(u, model, grid.dt, beta, beta1, beta2) if model is not None else 0.0
    return track + reg, track, reg
