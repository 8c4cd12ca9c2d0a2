import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_smooth
from nlslab import diagnostics as dg
from nlslab import spectral as sp
from nlslab.errors import InsufficientDataError, ValidationError
from nlslab.evolution import Schedule, SolverConfig, evolve, free_propagator, step
from nlslab.spectral import Field, Grid
from nlslab.symmetry import minimal_mass_blowup, phase_sym
from nlslab.trajectory import TrajectoryRecord

G = Grid(1, 40.0, 512)


def gaussian(grid, amp=1.0, width=1.0, kick=0.0):
    return Field(grid, amp * np.exp(-grid.r2 / (2 * width**2) + 1j * kick * grid.coords[0]))


def _traj_from_fields(times, fields):
    return TrajectoryRecord(d=fields[0].grid.d, snapshots=list(zip(times, fields)))


class TestConserved:
    @pytest.mark.parametrize("fixture", ["q1", "q2"])
    def test_ground_state_energy_vanishes(self, fixture, request):
        q = request.getfixturevalue(fixture)
        c = dg.conserved(q.field)
        assert abs(c.energy) < 1e-6 * q.gradient_norm_sq
        assert c.mass == pytest.approx(q.mass, rel=1e-14)

    @pytest.mark.parametrize("grid", [G, Grid(2, 16.0, 64)], ids=["d1", "d2"])
    def test_real_radial_has_no_momentum(self, grid):
        P = dg.momentum(gaussian(grid))
        assert len(P) == grid.d and max(abs(p) for p in P) < 1e-12

    def test_momentum_of_plane_wave_packet(self):
        # u = g e^{ikx}: P = k M for real g
        u = gaussian(G, kick=1.7)
        assert dg.momentum(u)[0] == pytest.approx(1.7 * dg.mass(u), rel=1e-10)

    @given(st.floats(-7, 7), st.integers(0, 2**31 - 1))
    def test_phase_leaves_mass_unchanged(self, th, seed):
        u = random_smooth(G, np.random.default_rng(seed))
        assert dg.mass(phase_sym(u, th)) == pytest.approx(dg.mass(u), rel=1e-14)

    def test_energy_of_scaled_soliton(self, q1):
        a = 1.05
        expected = 0.5 * q1.gradient_norm_sq * (a**2 - a**6)
        assert dg.energy(q1.field * a) == pytest.approx(expected, rel=1e-9)


class TestEnergyTensor:
    def test_density_is_exact(self):
        u = gaussian(G, amp=1.3, kick=0.4)
        T = dg.energy_tensor(u)
        assert np.array_equal(T.T00, u.values.real**2 + u.values.imag**2)

    def test_real_field_has_no_flux(self):
        g = Grid(2, 16.0, 64)
        T = dg.energy_tensor(gaussian(g, amp=0.8))
        assert all(np.max(np.abs(c)) < 1e-13 for c in T.T0j)
        assert len(T.Tjk) == 2 and len(T.Tjk[0]) == 2

    def test_mass_flux_identity_along_solver(self):
        u0 = gaussian(Grid(1, 40.0, 1024), amp=1.3, kick=0.6)
        dt = 1e-4
        u1 = step(u0, dt)
        u2 = step(u1, dt)
        r = dg.tensor_divergence_residual(u0, u1, u2, dt)
        assert r < 1e-4 * sp.lp_norm(u1, 2)

    def test_momentum_flux_identity(self):
        # d_t T0j + d_k Tjk = 0 for smooth solutions
        g = Grid(1, 40.0, 1024)
        u0 = gaussian(g, amp=1.2, kick=0.5)
        dt = 1e-4
        u1 = step(u0, dt)
        u2 = step(u1, dt)
        dT = (dg.energy_tensor(u2).T0j[0] - dg.energy_tensor(u0).T0j[0]) / (2 * dt)
        T = dg.energy_tensor(u1)
        div = sp.ifftn(g.derivative_symbols[0] * sp.fftn(T.Tjk[0][0])).real
        r = np.sqrt(g.weight * np.sum((dT + div) ** 2))
        assert r < 1e-4 * np.sqrt(g.weight * np.sum(dT**2) + 1.0)


class TestVirial:
    def test_gaussian_virial_identity(self):
        u0 = gaussian(Grid(1, 40.0, 1024), amp=1.2)
        rec = evolve(u0, SolverConfig(t_end=0.5, dt0=1e-4, adapt_c=1.0), Schedule(period=0.01))
        rep = dg.virial_check(rec)
        assert rep.expected == pytest.approx(16 * dg.energy(u0), rel=1e-9)
        assert rep.max_relative_defect < 0.01

    def test_soliton_variance_constant(self, q1):
        # the splitting perturbs the discrete energy by O(dt^2), which drives V'' = 16E
        rec = evolve(q1.field, SolverConfig(t_end=1.0, dt0=1e-4, adapt_c=1.0), Schedule(period=0.1))
        v = rec.column("variance")
        assert np.max(np.abs(v - v[0])) / v[0] < 1e-6

    def test_free_variance_is_quadratic(self):
        u0 = gaussian(Grid(1, 80.0, 1024), kick=0.3)
        rec = evolve(u0, SolverConfig(t_end=1.0, nonlinear=False), Schedule(period=0.05))
        t, v = rec.times, rec.column("variance")
        coef = np.polyfit(t, v, 2)
        assert np.max(np.abs(np.polyval(coef, t) - v)) < 1e-8
        # free Virial: d^2/dt^2 variance = 8 ||grad u||^2
        assert 2 * coef[0] == pytest.approx(8 * sp.gradient_norm_sq(u0), rel=1e-8)
        rep = dg.virial_check(rec, energy_value=0.5 * sp.gradient_norm_sq(u0))
        assert rep.max_relative_defect < 1e-6

    def test_needs_three_samples(self):
        rec = TrajectoryRecord(d=1, rows=[{"t": 0.0, "variance": 1.0, "energy": 0.0}] * 2)
        with pytest.raises(InsufficientDataError):
            dg.virial_check(rec)

    def test_needs_uniform_times(self):
        rows = [{"t": t, "variance": 1.0, "energy": 1.0} for t in (0.0, 0.1, 0.3)]
        with pytest.raises(ValidationError):
            dg.virial_check(TrajectoryRecord(d=1, rows=rows))

    def test_variance_of_centered_gaussian(self):
        # int x^2 e^{-x^2} dx = sqrt(pi)/2
        u = Field(G, np.exp(-0.5 * G.r2))
        assert dg.variance(u) == pytest.approx(np.sqrt(np.pi) / 2, rel=1e-12)


class TestSharpGN:
    def test_subthreshold_soliton(self, q1):
        # a*Q is itself an optimizer, so the defect is zero up to rounding
        u = q1.field * 0.9
        assert dg.mass(u) == pytest.approx(0.81 * q1.mass)
        assert dg.sharp_gn_defect(u, q1.mass) >= -1e-12 * q1.gradient_norm_sq

    def test_subthreshold_gaussian_strict(self, q1):
        u = gaussian(G)
        u = u * np.sqrt(0.81 * q1.mass / dg.mass(u))
        assert dg.sharp_gn_defect(u, q1.mass) > 0.01 * sp.gradient_norm_sq(u)

    @pytest.mark.parametrize("fixture", ["q1", "q2"])
    def test_equality_at_q(self, fixture, request):
        q = request.getfixturevalue(fixture)
        assert abs(dg.sharp_gn_defect(q.field, q.mass)) < 1e-6 * q.gradient_norm_sq

    @pytest.mark.parametrize("d", [1, 2])
    def test_random_sweep(self, d, q1, q2):
        q = q1 if d == 1 else q2
        grid = Grid(1, 40.0, 512) if d == 1 else Grid(2, 20.0, 64)
        rng = np.random.default_rng(d)
        worst = np.inf
        for _ in range(100):
            u = random_smooth(grid, rng, kmax=rng.uniform(0.5, 3.0), width=rng.uniform(0.5, 3.0))
            u = u * (np.sqrt(rng.uniform(0.05, 0.999) * q.mass / dg.mass(u)))
            worst = min(worst, dg.sharp_gn_defect(u, q.mass) / sp.gradient_norm_sq(u))
        assert worst >= -1e-8

    def test_printed_form_fails_near_threshold(self, q1):
        # the standard bound holds, the typeset bracket does not
        u = gaussian(G)
        u = u * np.sqrt(0.99 * q1.mass / dg.mass(u))
        assert dg.sharp_gn_defect(u, q1.mass) > 0
        assert dg.sharp_gn_defect_printed(u, q1.mass) < 0


class TestLittlewoodPaley:
    @given(st.floats(0.1, 30.0), st.integers(0, 2**31 - 1))
    def test_partition_of_unity(self, N, seed):
        u = random_smooth(G, np.random.default_rng(seed))
        lo = dg.lp_project(u, N, "low")
        hi = dg.lp_project(u, N, "high")
        assert np.max(np.abs(lo.values + hi.values - u.values)) < 1e-14 * max(1.0, np.max(np.abs(u.values))) * 10
        assert sp.lp_norm(lo, 2) <= sp.lp_norm(u, 2) * (1 + 1e-14)

    def test_plane_waves(self):
        g = Grid(1, 2 * np.pi, 64)
        for k, N, kept in ((3, 4.0, True), (9, 4.0, False), (4, 4.0, True), (8, 4.0, False)):
            f = Field(g, np.exp(1j * k * g.coords[0]))
            lo = dg.lp_project(f, N, "low")
            target = f.values if kept else 0.0 * f.values
            assert np.max(np.abs(lo.values - target)) < 1e-14

    def test_multiplier_is_smooth_bump(self):
        s = np.linspace(0, 3, 3001)
        b = dg.bump(s)
        assert np.all((b >= 0) & (b <= 1))
        assert np.all(b[s <= 1] == 1) and np.all(b[s >= 2] == 0)
        assert np.all(np.diff(b) <= 0)

    @pytest.mark.parametrize("bad", [{"N": 0.0}, {"N": -1.0}, {"N": 1.0, "side": "middle"}])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            dg.lp_project(gaussian(G), **bad)


class TestCutoffs:
    def test_chi_bump(self):
        g = Grid(2, 10.0, 128)
        c = dg.Cutoff("chi_bump", 2.0).values(g)
        r = np.sqrt(g.r2)
        assert np.all((c >= 0) & (c <= 1))
        assert np.all(c[r <= 1.8] == 1) and np.all(c[r >= 2.0] == 0)

    @pytest.mark.parametrize("grid", [Grid(1, 40.0, 512), Grid(2, 40.0, 256)], ids=["d1", "d2"])
    @pytest.mark.parametrize("R", [0.7, 2.0, 5.0])
    def test_psi_semidefinite_and_bounded(self, grid, R):
        cut = dg.Cutoff("psi_virial", R)
        assert cut.min_eigenvalue(grid) >= -1e-10
        psi = cut.values(grid)
        r = np.sqrt(grid.r2)
        assert np.all(psi[r <= R] == 1)
        # psi(x/R) <= 2R/|x| beyond the transition
        far = r > 3 * R
        assert np.all(psi[far] <= 2 * R / r[far] + 1e-12)
        a = cut.vector_field(grid)
        assert np.max(np.sqrt(sum(c**2 for c in a))) <= 2 * R + 1e-9

    def test_derivatives_match_finite_differences(self):
        # a is not periodic, so compare against centred differences away from the edge
        g = Grid(2, 40.0, 512)
        cut = dg.Cutoff("psi_virial", 3.0)
        a = cut.vector_field(g)
        div = sum(np.gradient(c, g.h, axis=j) for j, c in enumerate(a))
        inner = g.r2 < 15.0**2
        assert np.max(np.abs(div - cut.divergence(g))[inner]) < 5e-3
        D = cut.divergence(g)
        lap = sum(np.gradient(np.gradient(D, g.h, axis=j), g.h, axis=j) for j in range(2))
        assert np.max(np.abs(lap - cut.laplacian_of_divergence(g))[inner & (g.r2 > 1.0)]) < 5e-2

    @pytest.mark.parametrize("kw", [{"kind": "box", "R": 1.0}, {"kind": "chi_bump", "R": 0.0}])
    def test_invalid_cutoff(self, kw):
        with pytest.raises(ValidationError):
            dg.Cutoff(**kw)

    @pytest.mark.parametrize("kw", [{"R": 0, "K": 1}, {"R": 1, "K": 0}, {"R": 1, "K": 1, "C": 0.5}])
    def test_invalid_truncation(self, kw):
        with pytest.raises(ValidationError):
            dg.TruncationParams(**kw)


class TestMorawetz:
    def test_real_and_constant_phase_vanish(self, q1):
        cut = dg.Cutoff("psi_virial", 2.0)
        tr = dg.TruncationParams(2.0, 4.0)
        assert abs(dg.morawetz_action(gaussian(G), cut, tr)) < 1e-12
        assert abs(dg.morawetz_action(q1.field * np.exp(0.7j), cut, tr)) < 1e-12

    @given(st.integers(0, 2**31 - 1), st.floats(0.5, 5.0), st.floats(0.5, 4.0))
    def test_cauchy_schwarz_bound(self, seed, R, K):
        u = random_smooth(G, np.random.default_rng(seed))
        cut = dg.Cutoff("psi_virial", R)
        tr = dg.TruncationParams(R, K)
        Iu = dg.lp_project(u, tr.frequency)
        Rp = np.max(np.sqrt(sum(c**2 for c in cut.vector_field(G))))
        bound = Rp * np.sqrt(sp.gradient_norm_sq(Iu)) * sp.lp_norm(Iu, 2)
        assert abs(dg.morawetz_action(u, cut, tr)) <= bound * (1 + 1e-12)

    def test_requires_psi_cutoff(self):
        with pytest.raises(ValidationError):
            dg.morawetz_action(gaussian(G), dg.Cutoff("chi_bump", 1.0), dg.TruncationParams(1, 1))

    @pytest.mark.parametrize("t,R,K", [(-0.5, 2.0, 1.0), (-0.2, 1.0, 2.0), (-0.1, 1.0, 5.0)])
    def test_identity_on_explicit_blowup(self, q1, t, R, K):
        # dM/dt by centered difference of the exact solution vs the evaluated identity
        g = Grid(1, 40.0, 8192)
        cut = dg.Cutoff("psi_virial", R)
        tr = dg.TruncationParams(R, K)
        h = 1e-5
        dM = (dg.morawetz_action(minimal_mass_blowup(q1, g, t + h), cut, tr)
              - dg.morawetz_action(minimal_mass_blowup(q1, g, t - h), cut, tr)) / (2 * h)
        terms = dg.morawetz_terms(minimal_mass_blowup(q1, g, t), cut, tr)
        assert terms.rate == pytest.approx(dM, rel=0.1)
        # signed form: dM/dt >= 4 E_inside - |errors|
        errs = abs(terms.E1) + abs(terms.E2) + abs(terms.E3)
        assert dM >= terms.main_inside - errs - 0.1 * abs(dM)


class TestTruncation:
    def test_noop_truncation(self):
        u = gaussian(G, amp=1.1, kick=0.5)
        tr = dg.TruncationParams(R=19.0, K=20.0, C=8.0)
        assert dg.truncated_energy(u, tr) == pytest.approx(dg.energy(u), abs=1e-8)

    def test_zero_field(self):
        tr = dg.TruncationParams(1.0, 1.0)
        z = Field.zeros(G)
        assert dg.truncated_energy(z, tr) == 0.0
        assert dg.truncated_energy_ratio(z, tr) == 0.0
        assert dg.commutator_error(z, tr) == 0.0

    def test_ratio_decreases_toward_blowup(self, q1):
        g = Grid(1, 40.0, 8192)
        ratios = []
        for t in (-0.5, -0.2, -0.1, -0.05):
            tr = dg.TruncationParams(R=1.0, K=2.0 / abs(t))
            ratios.append(dg.truncated_energy_ratio(minimal_mass_blowup(q1, g, t), tr))
        assert np.all(np.diff(ratios) < 0)
        assert ratios[-1] < 0.01


class TestCommutator:
    def test_band_limited_field(self):
        g = Grid(1, 2 * np.pi, 128)
        K = 8.0
        rng = np.random.default_rng(0)
        modes = np.arange(-1, 2)  # |k| <= K/4 = 2
        v = sum((rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(1j * k * g.coords[0]) for k in modes)
        u = Field(g, 0.3 * v)
        # F(u) has |k| <= 5 * K/4 = 10 < CK
        tr = dg.TruncationParams(1.0, K, C=4.0 * 5.0 / 4.0 + 0.1)
        assert dg.commutator_error(u, tr) < 1e-10

    def test_non_increasing_in_K(self, q1):
        # monotone once P_{<=CK} keeps the spectral bulk; below that both terms shrink together
        u = q1.transformed(Grid(1, 40.0, 1024), scale=0.3)
        Ks = [K for K in (0.5, 1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64)
              if sp.lp_norm(dg.lp_project(u, K), 2) ** 2 >= 0.8 * dg.mass(u)]
        assert len(Ks) >= 8
        errs = [dg.commutator_error(u, dg.TruncationParams(1.0, K, C=1.0)) for K in Ks]
        assert np.all(np.diff(errs) <= 1e-12)


class TestStrichartz:
    def test_free_gaussian_refinement(self):
        g = Grid(1, 4000.0, 16384)
        u0 = gaussian(g, amp=0.3)
        norms = []
        for n in (401, 801):
            t = np.linspace(0, 50, n)
            norms.append(dg.strichartz_norm(_traj_from_fields(t, [free_propagator(u0, s) for s in t])))
        assert np.isfinite(norms[0])
        assert abs(norms[0] - norms[1]) / norms[1] < 0.01

    def test_zero_field(self):
        z = Field.zeros(G)
        assert dg.strichartz_norm(_traj_from_fields([0.0, 1.0], [z, z])) == 0.0

    def test_soliton_power_law(self, q1):
        Ts = np.array([0.5, 1.0, 2.0, 4.0])
        vals = []
        for T in Ts:
            rec = evolve(q1.field, SolverConfig(t_end=T, dt0=1e-3), Schedule(snapshot_period=T / 20))
            vals.append(dg.strichartz_norm(rec))
        slope = np.polyfit(np.log(Ts), np.log(vals), 1)[0]
        assert slope == pytest.approx(1 / 6, rel=0.05)

    def test_needs_two_snapshots(self):
        with pytest.raises(InsufficientDataError):
            dg.strichartz_norm(_traj_from_fields([0.0], [Field.zeros(G)]))


@given(st.floats(-7, 7), st.integers(0, 2**31 - 1))
def test_phase_invariance_of_functionals(th, seed):
    u = random_smooth(G, np.random.default_rng(seed))
    v = phase_sym(u, th)
    tr = dg.TruncationParams(2.0, 2.0)
    cut = dg.Cutoff("psi_virial", 2.0)
    for f in (dg.mass, dg.energy, dg.variance, sp.gradient_norm_sq, lambda w: dg.momentum(w)[0],
              lambda w: dg.truncated_energy(w, tr), lambda w: dg.commutator_error(w, tr),
              lambda w: dg.morawetz_action(w, cut, tr)):
        a, b = f(u), f(v)
        assert a == pytest.approx(b, rel=1e-11, abs=1e-13)
