import numpy as np
import pytest

from spincaustics.boundary import CoherentLabel, coherent_overlap, solve_boundary, to_klauder
from spincaustics.heavy import (
    HeavyMap, exact_kernel, husimi_grid, imf_landscape, semiclassical_kernel,
)
from spincaustics.twolevel import DOWN, UP, HeavyParams, SpinState, Window

FIG1 = HeavyParams()
ORIGIN = CoherentLabel(0.0, 0.0)


def overlap_by_quadrature(exit_label, entrance, hbar, n=60001):
    """Independent oracle: trapezoid quadrature of the two wavefunctions."""
    half = 10 * np.sqrt(hbar) + abs(exit_label.q) + abs(entrance.q)
    x = np.linspace(-half, half, n)

    def psi(lab):
        return ((np.pi * hbar) ** -0.25
                * np.exp(-(x - lab.q) ** 2 / (2 * hbar)
                         + 1j * lab.p * (x - lab.q / 2) / hbar))

    return np.trapezoid(np.conj(psi(exit_label)) * psi(entrance), x)


def test_exact_kernel_t0_identity():
    p = HeavyParams(t=0.0)
    assert exact_kernel(ORIGIN, ORIGIN, UP, UP, p) == pytest.approx(1.0, abs=1e-10)


def test_exact_kernel_t0_overlap_vs_quadrature_oracle():
    p = HeavyParams(t=0.0)
    ex = CoherentLabel(0.6, -0.4)
    got = exact_kernel(ORIGIN, ex, UP, UP, p)
    want = overlap_by_quadrature(ex, ORIGIN, p.hbar)
    assert abs(abs(got) - abs(want)) < 1e-12
    assert got == pytest.approx(coherent_overlap(ex, ORIGIN, p.hbar), abs=1e-10)


def test_exact_kernel_orthogonal_spins_at_t0():
    p = HeavyParams(t=0.0)
    assert exact_kernel(ORIGIN, ORIGIN, UP, DOWN, p) == pytest.approx(0.0, abs=1e-12)


def test_decoupled_semiclassics_is_exact():
    # J=0 makes the exponent quadratic; one saddle, SPA exact
    p = HeavyParams(J=0.0)
    for ex in [CoherentLabel(0.0, 0.375), CoherentLabel(0.5, 0.2),
               CoherentLabel(0.3, -0.5)]:
        Ke = exact_kernel(ORIGIN, ex, UP, UP, p)
        Ks, branches = semiclassical_kernel(ORIGIN, ex, UP, UP, p)
        assert len(branches) == 1
        assert abs(abs(Ks) - abs(Ke)) < 1e-9
        assert abs(Ks - Ke) < 1e-9


def test_jacobian_curvature_identity():
    # dQ''/dQ' = -i Phi''/2 wherever both are defined
    pmap = HeavyMap(ORIGIN, UP, UP, FIG1)
    rng = np.random.default_rng(11)
    for _ in range(100):
        z = complex(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
        _, jac = pmap.exit_and_tangent(np.asarray([z]))
        assert abs(complex(jac[0]) - (-0.5j * complex(pmap.phi_second(z)))) < 1e-10


def test_saddles_satisfy_one_step_boundary_problem():
    # every exponent saddle, re-expressed as a one-step trajectory,
    # reproduces the Klauder entrance and exit values
    from spincaustics.boundary import initial_point
    pmap = HeavyMap(ORIGIN, UP, UP, FIG1)
    for ex in [CoherentLabel(0.0, -0.8), CoherentLabel(0.5, 0.3)]:
        for b in solve_boundary(pmap, ex):
            start = initial_point(b.Qprime, ORIGIN)
            assert abs(to_klauder(start).P - ORIGIN.entrance_P()) < 1e-14
            pt = pmap.exit_point(b.Qprime)
            assert abs(pt.q - start.q) < 1e-12          # position invariant
            assert abs(to_klauder(pt).Q - ex.exit_target()) < 1e-10


def test_unitarity_conjugation_symmetry():
    # conj K^t(exit; entrance) = K^{-t}(entrance; exit)
    ex = CoherentLabel(0.7, -0.3)
    fwd = exact_kernel(ORIGIN, ex, UP, DOWN, FIG1)
    back = exact_kernel(ex, ORIGIN, DOWN, UP, HeavyParams(t=-FIG1.t))
    assert np.conj(fwd) == pytest.approx(back, abs=1e-10)


def test_phase_convention_independence_of_husimi():
    # |K|^2 must agree between the (x - q/2) and (x - q) phase conventions
    for ex in [CoherentLabel(0.3, 0.5), CoherentLabel(-0.6, -0.9)]:
        a = exact_kernel(ORIGIN, ex, UP, UP, FIG1, convention="half")
        b = exact_kernel(ORIGIN, ex, UP, UP, FIG1, convention="full")
        assert abs(abs(a) ** 2 - abs(b) ** 2) < 1e-10


def test_husimi_grid_decoupled_single_spot():
    # J=0, spin up: one Gaussian spot displaced by hbar*F*t in momentum
    p = HeavyParams(J=0.0)
    res = husimi_grid(ORIGIN, UP, UP, p, (-1, 1), (-0.6, 1.4), 32, stokes=None)
    for field in (res.exact, res.semiclassical):
        v = field.values
        qs = np.linspace(-1, 1, 32)
        ps = np.linspace(-0.6, 1.4, 32)
        qc = (v.sum(axis=1) @ qs) / v.sum()
        pc = (v.sum(axis=0) @ ps) / v.sum()
        assert abs(qc - 0.0) < 0.05
        assert abs(pc - p.hbar * p.F * p.t) < 0.05


@pytest.fixture(scope="module")
def fig1_husimi():
    return husimi_grid(ORIGIN, UP, UP, FIG1, (-2, 2), (-3, 1), 48)


def test_husimi_interference_zero_location(fig1_husimi):
    # the exact field has a deep zero within 0.15 of (0, -0.8)
    E = fig1_husimi.exact.values
    qs = np.linspace(-2, 2, 48)
    ps = np.linspace(-3, 1, 48)
    found = _deep_local_minimum(E, qs, ps)
    assert found is not None
    assert np.hypot(found[0] - 0.0, found[1] - (-0.8)) < 0.15
    S = fig1_husimi.semiclassical.values
    found_sc = _deep_local_minimum(S, qs, ps, depth=5e-3)
    assert found_sc is not None
    assert np.hypot(found_sc[0] - found[0], found_sc[1] - found[1]) < 0.15


def _deep_local_minimum(v, qs, ps, depth=1e-3):
    best = None
    for i in range(1, len(qs) - 1):
        for j in range(1, len(ps) - 1):
            x = v[i, j]
            if (x < v[i - 1, j] and x < v[i + 1, j]
                    and x < v[i, j - 1] and x < v[i, j + 1]
                    and x < depth * v.max()):
                if best is None or x < best[2]:
                    best = (qs[i], ps[j], x)
    return best


def test_husimi_mass_cross_check(fig1_husimi):
    # total masses of the exact and semiclassical fields agree coarsely;
    # at hbar = 0.25 the stationary-phase excess is about 13 percent
    E = fig1_husimi.exact.values.sum()
    S = fig1_husimi.semiclassical.values.sum()
    assert abs(S / E - 1.0) < 0.2


def test_hbar_scaling_of_median_error():
    # halving hbar must not increase the masked median error by more
    # than 1.5x (it should decrease)
    med = {}
    for hb in (0.25, 0.125):
        p = HeavyParams(hbar=hb)
        res = husimi_grid(ORIGIN, UP, UP, p, (-2, 2), (-3, 1), 32)
        E, S = res.exact.values, res.semiclassical.values
        mask = E >= 0.1 * E.max()
        rel = np.abs(S - E) / np.where(E > 0, E, 1)
        med[hb] = np.median(rel[mask])
    assert med[0.125] < 1.5 * med[0.25]
    assert med[0.125] < med[0.25]


def test_imf_landscape_structure():
    window = Window(-1.5, 1.5, -1.5, 1.5)
    field, markers = imf_landscape(ORIGIN, ORIGIN, UP, UP, FIG1, window, 48)
    # one influence-zero pre-image inside the window
    assert len(markers["z_zero_preimages"]) == 1
    sing = markers["z_zero_preimages"][0]
    assert sing == pytest.approx(0.7152526236739567j, abs=1e-6)
    # the caustic pair flanks it; the member closer to the real axis has
    # the smaller self-exit Im F (the other is beyond the amplitude scale)
    caustics = markers["caustics"]
    assert len(caustics) == 2
    (q1, k1, imf1), (q2, k2, imf2) = sorted(caustics, key=lambda c: abs(c[0]))
    assert k1 == "v-psc" and k2 == "v-psc"
    assert imf1 < imf2
    # landscape is finite except at the singular pre-image cells
    vals = field.values
    finite = np.isfinite(vals.real)
    assert finite.sum() >= vals.size - 4
    # Im F at the anchor is small and non-negative
    i = np.argmin(np.abs(np.linspace(-1.5, 1.5, 48) - 0.0))
    assert -1e-9 <= vals[i, i].imag < 1.0


def test_imf_log_divergence_near_zero():
    # moving toward the zero pre-image, Im F grows logarithmically
    pmap = HeavyMap(ORIGIN, UP, UP, FIG1)
    sing = pmap.singular_preimages()[0]
    vals = []
    for eps in (0.1, 0.01, 0.001):
        F, _ = pmap.action_fixed_exit(sing + eps, ORIGIN)
        vals.append(F.imag)
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] - vals[1] == pytest.approx(FIG1.hbar * np.log(10), rel=0.05)


def test_spin_transfer_kernel_modulus_bound():
    # |K| <= 1 for arbitrary exits and normalized spins
    rng = np.random.default_rng(2)
    for _ in range(10):
        ex = CoherentLabel(rng.uniform(-2, 2), rng.uniform(-2, 2))
        v = rng.normal(size=4)
        spin = SpinState(complex(v[0], v[1]), complex(v[2], v[3])).normalized()
        K = exact_kernel(ORIGIN, ex, UP, spin, FIG1)
        assert abs(K) <= 1 + 1e-10
