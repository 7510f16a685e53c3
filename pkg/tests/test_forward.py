import numpy as np
import pytest

from vmctl import core, forward, maxwell, scenarios
from vmctl.core import PhaseGrid
from vmctl.forward import ForwardOptions, run_forward


@pytest.fixture
def fgrid():
    # T = 0.5, dt = 0.5 dx; box large enough for the 1e-12 support radii
    # of the default blob plus light-cone growth
    nx = 32
    x_extent = 3.2
    dx = 2 * x_extent / nx
    dt = 0.5 * dx
    return PhaseGrid(x_extent=x_extent, p_extent=1.8, nx=nx, np_=24,
                     dt=dt, nt=int(round(0.5 / dt)))


def blob_init(grid, **kw):
    # weak plasma at >= 2 cells/sigma: keeps self-fields and interpolation
    # halos inside the support-growth allowances
    params = dict(x_sigma=0.4, p_sigma=0.2, amplitude=0.02)
    params.update(kw)
    return scenarios.make_initial_data(grid, "gaussian-blob", **params)


def one_ring(grid, amplitude=1.0):
    return scenarios.make_coils(
        grid, [{"profile": "ring", "center": (0.0, 0.0), "radius": 1.0,
                "amplitude": amplitude}]
    )


class TestTrivialRuns:
    def test_zero_everything_stays_zero(self, fgrid):
        init = scenarios.make_initial_data(fgrid, "zero")
        out = run_forward(init, None, None, fgrid)
        assert np.all(out.rho == 0.0)
        assert np.all(out.final_f == 0.0)
        assert out.diagnostics["total_energy"][-1] == 0.0

    def test_no_plasma_equals_external_solve(self, fgrid):
        init = scenarios.make_initial_data(fgrid, "zero")
        model = one_ring(fgrid)
        u = 0.5 * np.ones((1, fgrid.nt))
        out = run_forward(init, model, u, fgrid)
        e1s, e2s, bs = maxwell.external_field_solve(model, u, fgrid)
        np.testing.assert_allclose(out.final_fields.e1, e1s[-1], atol=1e-13)
        np.testing.assert_allclose(out.final_fields.e2, e2s[-1], atol=1e-13)
        assert np.all(out.final_f == 0.0)

    def test_determinism(self, fgrid):
        init = blob_init(fgrid)
        model = one_ring(fgrid, amplitude=0.5)
        u = 0.3 * np.ones((1, fgrid.nt))
        a = run_forward(init, model, u, fgrid)
        b = run_forward(init, model, u, fgrid)
        assert np.array_equal(a.rho, b.rho)
        for k in forward.DIAG_COLUMNS:
            assert np.array_equal(a.diagnostics[k], b.diagnostics[k])


class TestConservation:
    def test_two_bump_invariants(self):
        nx = 48
        x_extent = 4.0
        dx = 2 * x_extent / nx
        dt = 0.5 * dx
        grid = PhaseGrid(x_extent=x_extent, p_extent=2.8, nx=nx, np_=40,
                         dt=dt, nt=int(round(0.5 / dt)))
        init = scenarios.make_initial_data(
            grid, "two-bump", separation=0.7, x_sigma=0.42, p_sigma=0.3,
            p_drift=0.35, amplitude=0.05,
        )
        out = run_forward(init, None, None, grid)
        d = out.diagnostics
        mass = d["mass"]
        assert abs(mass[-1] - mass[0]) / mass[0] < 1e-6  # signed sum: exact
        l1 = d["l1"]
        assert abs(l1[-1] - l1[0]) / l1[0] < 5e-3  # undershoot growth bounded
        etot = d["total_energy"]
        assert abs(etot[-1] - etot[0]) / etot[0] < 1e-3
        # Gauss residual stays small relative to the charge norm
        rho_norm = np.sqrt(np.sum(out.rho[-1] ** 2)) * grid.dx
        assert d["gauss_residual"][-1] < 1e-2 * rho_norm
        # fields never reach the boundary layer
        assert d["boundary_fields"].max() < 1e-10

    def test_free_streaming_linf_preserved(self):
        # finer x grid: the sup-norm drift is pure interpolation error
        grid = PhaseGrid(x_extent=3.2, p_extent=2.4, nx=64, np_=16,
                         dt=0.05, nt=10)
        init = blob_init(grid, x_sigma=0.45)
        opts = ForwardOptions(coupling=False, store_snapshots=False)
        out = run_forward(init, None, None, grid, opts)
        linf = out.diagnostics["linf"]
        assert abs(linf[-1] - linf[0]) / linf[0] < 5e-3

    def test_momentum_support_bound(self, fgrid):
        init = blob_init(fgrid)
        model = one_ring(fgrid, amplitude=0.3)
        u = 0.5 * np.ones((1, fgrid.nt))
        out = run_forward(init, model, u, fgrid)
        d = out.diagnostics
        rp = d["support_p"]
        bound = rp[0] + d["force_integral"] + fgrid.dp
        assert np.all(rp <= bound + 1e-12)

    def test_x_support_light_cone(self, fgrid):
        init = blob_init(fgrid)
        out = run_forward(init, None, None, fgrid)
        d = out.diagnostics
        rx = d["support_x"]
        assert np.all(rx <= rx[0] + d["t"] + 2 * fgrid.dx)


class TestEnergyIdentity:
    def test_uncontrolled_internal_energy_constant(self, fgrid):
        init = blob_init(fgrid)
        out = run_forward(init, None, None, fgrid)
        res, work = forward.energy_identity_residual(out.diagnostics, fgrid.dt)
        assert np.all(work == 0.0)
        scale = out.diagnostics["total_energy"][0]
        assert np.max(np.abs(res)) < 2e-3 * scale / fgrid.t_final

    def test_controlled_work_balance(self, fgrid):
        # drifting blob: nonzero mean current makes E_ext . j_f an O(1)
        # fraction of the energy budget rather than a symmetry residue
        init = blob_init(fgrid, p_sigma=0.18, p_drift=(0.25, 0.0))
        model = one_ring(fgrid, amplitude=0.5)
        u = np.vstack([scenarios.waveform("half-sine", fgrid.times_half(),
                                          amplitude=0.8)])
        ext = maxwell.external_field_solve(model, u, fgrid)
        out = run_forward(init, model, u, fgrid, ForwardOptions(external=ext))
        res, work = forward.energy_identity_residual(out.diagnostics, fgrid.dt)
        wmax = np.max(np.abs(work))
        assert wmax > 0
        # discretization-limited at this coarse unit grid; the acceptance
        # suite checks the 2% bound and its 2nd-order refinement trend
        assert np.max(np.abs(res)) < 0.35 * wmax


class TestObjective:
    def test_perfect_tracking_zero_control(self, fgrid):
        init = blob_init(fgrid)
        model = one_ring(fgrid)
        u = np.zeros((1, fgrid.nt))
        out = run_forward(init, model, u, fgrid)
        val, track, reg = forward.objective_eval(
            out.rho, out.rho, u, model, fgrid, 1e-3, 1e-2, 1e-2
        )
        assert val == 0.0 and track == 0.0 and reg == 0.0

    def test_constant_control_regularizer_value(self, fgrid):
        # zero plasma, rho_d = 0, u = 1: objective = (beta/2) c_j T exactly
        init = scenarios.make_initial_data(fgrid, "zero")
        model = one_ring(fgrid)
        u = np.ones((1, fgrid.nt))
        out = run_forward(init, model, u, fgrid)
        beta = 1e-3
        val, track, reg = forward.objective_eval(
            out.rho, np.zeros_like(out.rho), u, model, fgrid, beta, 1e-2, 1e-2
        )
        assert track == 0.0
        assert reg == pytest.approx(0.5 * beta * model.c[0] * fgrid.t_final)

    def test_regularization_gradient_is_exact_derivative(self, fgrid, rng):
        model = one_ring(fgrid)
        beta, b1, b2 = 1e-2, 0.3, 0.15
        u = rng.standard_normal((1, fgrid.nt))
        grad = forward.regularization_gradient(u, model, fgrid.dt, beta, b1, b2)
        direction = rng.standard_normal(u.shape)
        eps = 1e-6
        fp = forward.regularization_term(u + eps * direction, model, fgrid.dt, beta, b1, b2)
        fm = forward.regularization_term(u - eps * direction, model, fgrid.dt, beta, b1, b2)
        fd = (fp - fm) / (2 * eps)
        assert fd == pytest.approx(np.sum(grad * direction), rel=1e-9)


class TestSnapshots:
    def test_roundtrip_and_stride(self, fgrid):
        init = blob_init(fgrid)
        out = run_forward(init, None, None, fgrid,
                          ForwardOptions(snapshot_stride=2))
        store = out.snapshots
        np.testing.assert_allclose(
            store.get_f(0), init.f0, atol=1e-6
        )
        # interpolated level sits between its neighbours
        f1 = store.get_f(1)
        f0 = store.get_f(0)
        f2 = store.get_f(2)
        np.testing.assert_allclose(f1, 0.5 * (f0 + f2), atol=1e-12)
