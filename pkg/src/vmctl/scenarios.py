"""Named desk-scale scenarios: initial plasma profiles, coils, waveforms.

These are our own constructions for testing and demonstration; the problem
formulation fixes none. Every profile is smooth and effectively compactly
supported inside the truncated box (checked at construction against the
support threshold).
"""

import numpy as np

from . import core, maxwell
from .core import ControlModel, FieldState, InitialData
from .errors import ConfigError


def _phase_mesh(grid):
    x1 = grid.x_nodes[:, None, None, None]
    x2 = grid.x_nodes[None, :, None, None]
    p1 = grid.p_centers[None, None, :, None]
    p2 = grid.p_centers[None, None, None, :]
    return x1, x2, p1, p2


def gaussian_blob(grid, center=(0.0, 0.0), x_sigma=0.4, p_sigma=0.35,
                  p_drift=(0.0, 0.0), amplitude=1.0):
    """Single Gaussian bump in x and p, optionally drifting in p."""
    x1, x2, p1, p2 = _phase_mesh(grid)
    return amplitude * np.exp(
        -((x1 - center[0]) ** 2 + (x2 - center[1]) ** 2) / (2 * x_sigma**2)
        - ((p1 - p_drift[0]) ** 2 + (p2 - p_drift[1]) ** 2) / (2 * p_sigma**2)
    ) * np.ones((grid.nxn, grid.nxn, grid.np_, grid.np_))


def two_bump(grid, separation=0.8, x_sigma=0.35, p_sigma=0.3, p_drift=0.6,
             amplitude=1.0):
    """Counter-streaming pair: bumps at x1 = -+separation/2, p1 = +-p_drift."""
    f = gaussian_blob(grid, (-separation / 2, 0.0), x_sigma, p_sigma,
                      (p_drift, 0.0), amplitude)
    f += gaussian_blob(grid, (separation / 2, 0.0), x_sigma, p_sigma,
                       (-p_drift, 0.0), amplitude)
    return f


INITIAL_PROFILES = {
    "zero": lambda grid, **kw: grid.zero_distribution(),
    "gaussian-blob": gaussian_blob,
    "two-bump": two_bump,
}


def effective_radius(values, axis_coords, threshold=core.SUPPORT_EPSILON):
    mask = np.abs(values) >= threshold
    if not mask.any():
        return 0.0
    return float(np.max(axis_coords[mask]))


def make_initial_data(grid, profile="gaussian-blob", background="matched",
                      poisson_tol=1e-10, **params):
    """Build InitialData from a named profile plus a background policy.

    background = "matched": static neutralizing density equal to rho_f0,
    E0 = B0 = 0 (condition div E0 = rho(0) holds exactly).
    background = "uniform": E0 from the mean-subtracted Poisson solve; the
    uniform mean stands in for the neutralizing density; fields then do not
    vanish near the wall, so the boundary-layer assertion must be relaxed.
    """
    try:
        f0 = INITIAL_PROFILES[profile](grid, **params)
    except KeyError:
        raise ConfigError(f"unknown initial profile {profile!r}") from None
    if core.distribution_boundary_max(f0) >= core.SUPPORT_EPSILON:
        raise ConfigError(
            f"initial profile {profile!r} does not vanish on the outermost "
            f"grid layer; enlarge the box or shrink the profile"
        )
    rho0 = core.charge_density(f0, grid)
    rx, rp = core.support_radii(f0, grid)
    if background == "matched":
        fields0 = FieldState.zeros(grid)
        bg = rho0.copy()
        cc = 0.0
        r_fields = 0.0
    elif background == "uniform":
        fields0, mean = maxwell.poisson_cc_init(rho0, grid, tol=poisson_tol)
        bg = np.full_like(rho0, mean)
        res = maxwell.divergence(fields0, grid.dx) - (rho0 - mean)
        cc = float(np.sqrt(np.sum(res[1:-1, 1:-1] ** 2)) * grid.dx)
        r_fields = grid.x_extent  # -grad(phi) extends to the wall
    else:
        raise ConfigError(f"unknown background policy {background!r}")
    return InitialData(
        f0=f0, fields0=fields0, r_plasma=rx, r_momentum=rp,
        r_fields=r_fields, background=bg, cc_residual=cc,
    )


# --- coils -------------------------------------------------------------------

def ring_coil(grid, center=(0.0, 0.0), radius=1.0, amplitude=1.0):
    """Solenoidal ring current: tangential, C^2, vanishes for r >= radius.

    z(x) = A (1 - (r/R)^2)^3 perp(x - c) / R; div z = 0 identically, so this
    coil never sources the Gauss-law integral.
    """
    x1, x2 = np.meshgrid(grid.x_nodes, grid.x_nodes, indexing="ij")
    d1 = x1 - center[0]
    d2 = x2 - center[1]
    s2 = (d1**2 + d2**2) / radius**2
    shape = np.where(s2 < 1.0, (1.0 - np.minimum(s2, 1.0)) ** 3, 0.0)
    return amplitude / radius * np.stack([-d2 * shape, d1 * shape])


def dipole_coil(grid, center=(0.0, 0.0), radius=1.0, amplitude=1.0,
                direction=(1.0, 0.0)):
    """Uniform-direction bump current (not divergence-free)."""
    x1, x2 = np.meshgrid(grid.x_nodes, grid.x_nodes, indexing="ij")
    s2 = ((x1 - center[0]) ** 2 + (x2 - center[1]) ** 2) / radius**2
    shape = np.where(s2 < 1.0, (1.0 - np.minimum(s2, 1.0)) ** 3, 0.0)
    d = np.asarray(direction, dtype=float)
    d /= np.hypot(*d)
    return amplitude * np.stack([d[0] * shape, d[1] * shape])


COIL_PROFILES = {"ring": ring_coil, "dipole": dipole_coil}


def make_coils(grid, specs):
    """Assemble a ControlModel from a list of coil spec dicts."""
    profiles = []
    radii = []
    for spec in specs:
        spec = dict(spec)
        kind = spec.pop("profile", "ring")
        try:
            builder = COIL_PROFILES[kind]
        except KeyError:
            raise ConfigError(f"unknown coil profile {kind!r}") from None
        z = builder(grid, **spec)
        center = spec.get("center", (0.0, 0.0))
        radii.append(spec.get("radius", 1.0) + np.hypot(*center))
        profiles.append(z)
    if not profiles:
        raise ConfigError("control model needs at least one coil")
    model = ControlModel(
        profiles=np.stack(profiles), support_radius=float(max(radii))
    )
    return model.finalize(grid)


# --- control waveforms --------------------------------------------------------

def waveform(name, times, **params):
    """Named scalar waveform evaluated on the (half-step) time grid."""
    t = np.asarray(times)
    if name == "zero":
        return np.zeros_like(t)
    if name == "constant":
        return np.full_like(t, params.get("value", 1.0))
    if name == "sine":
        a = params.get("amplitude", 1.0)
        freq = params.get("frequency", 1.0)
        phase = params.get("phase", 0.0)
        return a * np.sin(2 * np.pi * freq * t + phase)
    if name == "half-sine":
        # one arch over [0, T]: interior, vanishes at both ends
        a = params.get("amplitude", 1.0)
        return a * np.sin(np.pi * t / t[-1])
    if name == "ramp":
        a = params.get("amplitude", 1.0)
        return a * t / t[-1]
    raise ConfigError(f"unknown waveform {name!r}")
