import numpy as np
import pytest

from pshdisc.disc_calculus import DiscField, boundary_trace, dbar, eval_field, sup_norm
from pshdisc.disc_solver import (
    C0Estimate,
    C0Method,
    SolverConfig,
    SolveTrace,
    TranslationTrace,
    estimate_c0,
    jholomorphy_residuals,
    pde_residual,
    phi_map,
    psi_map,
    select_mode,
    solve_disc,
    structural_residual,
    translate_disc,
)
from pshdisc.errors import NoConvergence
from pshdisc.structure import QMode, QTensor, named_structure

P = np.array([0.1 + 0.05j, -0.2j])


def target(scale=1.0, degree=24):
    return DiscField.holomorphic([P, [0.3 * scale, 0.1j * scale], [0.05, -0.05j]], degree)


def cubic(degree=24):
    return DiscField.holomorphic([P, [0.8, 0.5j], [0.3, 0.3], [0.2j, 0.2]], degree)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(relaxation=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)


def test_c0_estimate_invariants():
    with pytest.raises(ValueError):
        C0Estimate(0.5, C0Method.CONTRACTION_BOUND)
    with pytest.raises(ValueError):
        C0Estimate(np.inf, C0Method.CONTRACTION_BOUND)


def test_identity_maps_under_standard(q_st, rng):
    u = DiscField(rng.normal(size=(25, 25, 2)) * 0.1 + 0j)
    assert phi_map(u, q_st) is u
    assert psi_map(u, q_st) is u


def test_constant_disc_is_fixed(q05):
    c = DiscField.constant(P)
    assert phi_map(c, q05).allclose(c, atol=1e-15)


def test_psi_fixes_centre(q05, rng):
    u = target() + DiscField.from_monomials({(1, 1): [0.05, 0.02j], (0, 2): [0.01, 0]})
    assert np.abs(eval_field(psi_map(u, q05), 0) - eval_field(u, 0)).max() <= 1e-13
    diff = psi_map(u, q05) - phi_map(u, q05)
    assert np.abs(diff.coeffs[1:]).max() == 0 and np.abs(diff.coeffs[:, 1:]).max() == 0


def test_solve_standard_returns_input(q_st):
    h = target()
    tr = SolveTrace()
    assert solve_disc(h, q_st, trace=tr) is h
    assert tr.iterations == 1 and tr.residuals == [0.0]


def test_solve_rejects_nonholomorphic(q05):
    with pytest.raises(ValueError):
        solve_disc(DiscField.from_monomials({(0, 1): [1, 0]}), q05)


def test_solve_small_structures(j_small):
    Q = QTensor(j_small)
    h = target()
    tr = SolveTrace()
    v = solve_disc(h, Q, trace=tr)
    assert tr.iterations <= 20
    assert np.abs(v.center - h.center).max() <= 1e-15
    back = boundary_trace(psi_map(v, Q), 128).values - boundary_trace(h, 128).values
    assert np.abs(back).max() <= 1e-9
    pde, struct = jholomorphy_residuals(v, j_small, Q)
    assert pde <= 1e-8 and struct <= 1e-6


def test_phi_of_jdisc_is_holomorphic(q05):
    v = solve_disc(target(), q05)
    assert sup_norm(dbar(phi_map(v, q05))) <= 1e-8


def test_residuals_for_simple_discs(j_st, q_st):
    u = DiscField.holomorphic([[0, 0], [1, 0]])
    pde, struct = jholomorphy_residuals(u, j_st, q_st)
    assert pde <= 1e-12 and struct <= 1e-12
    ubar = DiscField.from_monomials({(0, 1): [1, 0]})
    assert pde_residual(ubar, q_st) == pytest.approx(1.0, abs=1e-14)
    assert structural_residual(ubar, j_st) > 1.0


def test_exactly_one_mode_is_j_holomorphic(j05):
    mode, report = select_mode(cubic(), j05)
    assert mode is QMode.ANTILINEAR
    assert report["antilinear"] <= 1e-6 < report["linear"]


@pytest.mark.parametrize("field", ["bump", "shear"])
def test_large_deformation_surfaces_no_convergence(ball, field):
    J = named_structure("conjugated", field, 0.8, ball)
    with pytest.raises(NoConvergence) as info:
        solve_disc(cubic(), QTensor(J))
    assert info.value.history


def test_c0_standard_is_one(q_st):
    c0 = estimate_c0(q_st, [target()])
    assert c0.value == 1.0


def test_c0_methods_agree_and_are_ordered(q05):
    probes = [target(), target(1.5)]
    a = estimate_c0(q05, probes, C0Method.CONTRACTION_BOUND)
    b = estimate_c0(q05, probes, C0Method.LINEARIZED_SAMPLING)
    assert 1 < a.value < 2 and 1 <= b.value < 2
    assert a.value >= b.value
    assert a.value / b.value <= 2


def test_translate_trivial_cases(q_st, q05):
    u = target()
    assert translate_disc(u, [0, 0], q05) is u
    V = np.array([0.05, -0.03j])
    assert np.array_equal(translate_disc(u, V, q_st).coeffs, (u + V).coeffs)


def test_translate_bound_and_monotonicity(q05):
    u = solve_disc(target(), q05)
    V = np.array([0.06, 0.08j])  # |V| = 0.1
    c0 = estimate_c0(q05, [u, u + V])
    tr = TranslationTrace()
    v = translate_disc(u, V, q05, c0=c0, trace=tr)
    lhs = boundary_trace(psi_map(v, q05), 128).values
    rhs = boundary_trace(psi_map(u, q05) + V, 128).values
    assert np.abs(lhs - rhs).max() <= 1e-8
    assert sup_norm(u - v) <= 1.1 * c0.value * 0.1
    d = np.array(tr.distances)
    assert np.all(np.diff(d) >= -1e-12)
    assert np.all(d <= 1.1 * np.array(tr.ts) * c0.value * 0.1)


def test_translation_failure_reports_t(ball):
    J = named_structure("conjugated", "bump", 0.8, ball)
    Q = QTensor(J)
    with pytest.raises(NoConvergence) as info:
        translate_disc(cubic(), [0.01, 0], Q, SolverConfig(continuation_steps=2),
                       c0=C0Estimate(2.0, C0Method.CONTRACTION_BOUND))
    assert 0 < info.value.t <= 1
