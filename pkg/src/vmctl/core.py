"""Phase-space grid, state containers, relativistic kinematics and moments.

Units: c = 1, particle charge/mass = 1. Phase space is the truncated box
[-x_extent, x_extent]^2 x [-p_extent, p_extent]^2. The distribution f is
sampled at spatial nodes (nx+1 per axis) and momentum cell centers (np per
axis, midpoint quadrature). Fields live on a staggered spatial grid, see
FieldState.
"""

from dataclasses import dataclass, field

import numpy as np

FOURPI = 4.0 * np.pi

# absolute threshold below which a sample counts as "zero" for support tracking
SUPPORT_EPSILON = 1e-12


def velocity(p):
    """Relativistic velocity p/sqrt(1+|p|^2) of a momentum 2-vector.

    Accepts a single 2-vector or an array with the component axis last.
    The result always has norm < 1.
    """
    p = np.asarray(p, dtype=float)
    gamma = np.sqrt(1.0 + np.sum(p * p, axis=-1, keepdims=True))
    return p / gamma


def perp(a):
    """Counterclockwise quarter turn: (a1, a2) -> (-a2, a1)."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    out[..., 0] = -a[..., 1]
    out[..., 1] = a[..., 0]
    return out


@dataclass
class PhaseGrid:
    """Uniform 4D grid over (x1, x2, p1, p2) plus the time axis.

    f is sampled at spatial nodes x_i = -x_extent + i*dx, i = 0..nx, and at
    momentum cell centers p_k = -p_extent + (k+1/2)*dp, k = 0..np-1.
    """

    x_extent: float
    p_extent: float
    nx: int
    np_: int
    dt: float
    nt: int

    dx: float = field(init=False)
    dp: float = field(init=False)

    def __post_init__(self):
        if self.nx < 4 or self.np_ < 4:
            raise ValueError("grid needs at least 4 points per axis")
        if self.x_extent <= 0 or self.p_extent <= 0 or self.dt <= 0 or self.nt < 1:
            raise ValueError("extents, dt and nt must be positive")
        self.dx = 2.0 * self.x_extent / self.nx
        self.dp = 2.0 * self.p_extent / self.np_
        if self.dt > self.dx:
            raise ValueError(
                f"dt={self.dt:g} exceeds the light-speed bound dx={self.dx:g}"
            )
        # 1D axes
        self.x_nodes = -self.x_extent + self.dx * np.arange(self.nx + 1)
        self.p_centers = -self.p_extent + self.dp * (np.arange(self.np_) + 0.5)
        # momentum-grid kinematics, broadcast over (p1, p2)
        pp1, pp2 = np.meshgrid(self.p_centers, self.p_centers, indexing="ij")
        gamma = np.sqrt(1.0 + pp1 * pp1 + pp2 * pp2)
        self.phat1 = pp1 / gamma
        self.phat2 = pp2 / gamma
        self.gamma = gamma

    @property
    def nxn(self):
        """Number of spatial nodes per axis."""
        return self.nx + 1

    @property
    def t_final(self):
        return self.nt * self.dt

    def times(self):
        """Integer time levels t_0..t_nt."""
        return self.dt * np.arange(self.nt + 1)

    def times_half(self):
        """Half-integer time levels t_{k+1/2}, k = 0..nt-1 (control grid)."""
        return self.dt * (np.arange(self.nt) + 0.5)

    def zero_distribution(self):
        return np.zeros((self.nxn, self.nxn, self.np_, self.np_))


@dataclass
class FieldState:
    """In-plane E and out-of-plane B on the 2D TE-mode staggered grid.

    e1 at x1-edge midpoints (i+1/2, j): shape (nx, nx+1)
    e2 at x2-edge midpoints (i, j+1/2): shape (nx+1, nx)
    b  at cell centers   (i+1/2, j+1/2): shape (nx, nx)
    """

    e1: np.ndarray
    e2: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, grid):
        nx = grid.nx
        return cls(
            e1=np.zeros((nx, nx + 1)),
            e2=np.zeros((nx + 1, nx)),
            b=np.zeros((nx, nx)),
        )

    def copy(self):
        return FieldState(self.e1.copy(), self.e2.copy(), self.b.copy())

    def boundary_max(self):
        """Largest field magnitude on the outermost grid layer."""
        return max(
            np.max(np.abs(self.e1[:, [0, -1]])),
            np.max(np.abs(self.e1[[0, -1], :])),
            np.max(np.abs(self.e2[[0, -1], :])),
            np.max(np.abs(self.e2[:, [0, -1]])),
            np.max(np.abs(self.b[[0, -1], :])),
            np.max(np.abs(self.b[:, [0, -1]])),
        )


@dataclass
class ControlModel:
    """N fixed coil profiles z_j(x) with their L2-norm-squared constants."""

    profiles: np.ndarray  # (N, 2, nxn, nxn), sampled at spatial nodes
    support_radius: float  # L = max_j r_j
    c: np.ndarray = None  # (N,), c_j = ||z_j||_{L2}^2

    def __post_init__(self):
        if self.profiles.ndim != 4 or self.profiles.shape[1] != 2:
            raise ValueError("profiles must have shape (N, 2, nxn, nxn)")

    def finalize(self, grid):
        """Compute the c_j constants by grid quadrature."""
        w = grid.dx * grid.dx
        self.c = np.array(
            [np.sum(z[0] ** 2 + z[1] ** 2) * w for z in self.profiles]
        )
        if np.any(self.c <= 0):
            raise ValueError("every coil profile must be nonzero")
        return self

    @property
    def n_coils(self):
        return self.profiles.shape[0]

    def assemble(self, u_values):
        """U(x) = sum_j u_j z_j(x) for one time level; returns (2, nxn, nxn)."""
        return np.tensordot(u_values, self.profiles, axes=(0, 0))


def feasible(u, tol=0.0):
    """Box-constraint check |u_j(t_k)| <= 1 (within tol)."""
    return bool(np.all(np.abs(u) <= 1.0 + tol))


@dataclass
class InitialData:
    """Initial distribution and fields plus their support radii."""

    f0: np.ndarray
    fields0: FieldState
    r_plasma: float  # support radius of f0 in x
    r_momentum: float  # support radius of f0 in p
    r_fields: float  # support radius of the initial fields
    background: np.ndarray = None  # static neutralizing charge density (nxn, nxn)
    cc_residual: float = 0.0  # ||div E0 - (rho_f0 - background)|| after init


def charge_density(f, grid):
    """rho_f = 4*pi * integral of f over p (midpoint rule), at spatial nodes."""
    return FOURPI * np.sum(f, axis=(2, 3)) * grid.dp**2


def current_density(f, grid):
    """j_f = 4*pi * integral of phat*f over p; returns (j1, j2) at nodes."""
    w = FOURPI * grid.dp**2
    j1 = np.tensordot(f, grid.phat1, axes=([2, 3], [0, 1])) * w
    j2 = np.tensordot(f, grid.phat2, axes=([2, 3], [0, 1])) * w
    return j1, j2


def kinetic_energy_density(f, grid):
    """4*pi * integral of f*sqrt(1+|p|^2) dp, at spatial nodes."""
    return FOURPI * np.tensordot(f, grid.gamma, axes=([2, 3], [0, 1])) * grid.dp**2


def lq_norm(f, grid, q):
    """Discrete L^q norm of f over phase space, q in {1, 2, inf}.

    f vanishes on the outer layer, so the plain dx^2*dp^2-weighted sum
    coincides with the trapezoid rule.
    """
    if q == np.inf or q == "inf":
        return float(np.max(np.abs(f)))
    w = grid.dx**2 * grid.dp**2
    if q == 1:
        return float(np.sum(np.abs(f)) * w)
    if q == 2:
        return float(np.sqrt(np.sum(f * f) * w))
    raise ValueError(f"unsupported exponent {q!r}")


def support_radii(f, grid, eps=SUPPORT_EPSILON):
    """Smallest radii (r_x, r_p) with |f| < eps outside |x|<=r_x, |p|<=r_p."""
    mask = np.abs(f) >= eps
    if not mask.any():
        return 0.0, 0.0
    x_mask = mask.any(axis=(2, 3))
    p_mask = mask.any(axis=(0, 1))
    xx1, xx2 = np.meshgrid(grid.x_nodes, grid.x_nodes, indexing="ij")
    rx = float(np.max(np.hypot(xx1, xx2)[x_mask]))
    pp1, pp2 = np.meshgrid(grid.p_centers, grid.p_centers, indexing="ij")
    rp = float(np.max(np.hypot(pp1, pp2)[p_mask]))
    return rx, rp


def distribution_boundary_max(f):
    """Largest |f| on the outermost layer in x or p."""
    return max(
        np.max(np.abs(f[[0, -1], :, :, :])),
        np.max(np.abs(f[:, [0, -1], :, :])),
        np.max(np.abs(f[:, :, [0, -1], :])),
        np.max(np.abs(f[:, :, :, [0, -1]])),
    )


def check_support_margin(x_extent, r_fields, r_coils, r_plasma, t_final):
    """Domain-size inequality x_extent >= r_fields + L + R + T.

    Fields launched by compactly supported data, coils and plasma cannot
    reach the boundary within [0, T] (finite propagation speed). Returns the
    required margin; raises if it exceeds x_extent.
    """
    need = r_fields + r_coils + r_plasma + t_final
    if x_extent < need:
        raise ValueError(
            f"x_extent={x_extent:g} violates the support margin: needs "
            f">= r_fields+L+R+T = {r_fields:g}+{r_coils:g}+{r_plasma:g}"
            f"+{t_final:g} = {need:g}"
        )
    return need
