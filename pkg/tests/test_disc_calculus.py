import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import cauchy_green_quadrature
from pshdisc.disc_calculus import (
    BoundaryTrace,
    DiscField,
    boundary_trace,
    c1_alpha_seminorm,
    cg_transform,
    dbar,
    dz,
    eval_field,
    polar_grid,
    sup_norm,
)
from pshdisc.errors import OutsideDisc, TruncationOverflow


def assert_exact(a, b):
    # (a / (n + 1)) * (n + 1) may differ from a by one rounding
    assert np.all(np.abs(a - b) <= 4 * np.finfo(float).eps * np.abs(b))


def random_field(rng, degree=24, max_deg=None, holomorphic=False):
    max_deg = degree if max_deg is None else max_deg
    c = np.zeros((degree + 1, degree + 1, 2), dtype=complex)
    nmax = 1 if holomorphic else max_deg + 1
    c[: max_deg + 1, :nmax] = rng.normal(size=(max_deg + 1, nmax, 2)) + 1j * rng.normal(size=(max_deg + 1, nmax, 2))
    return DiscField(c)


def mono(m, n, degree=24):
    return DiscField.from_monomials({(m, n): [1, 0]}, degree)


def test_degree_must_be_at_least_four():
    with pytest.raises(ValueError):
        DiscField.zeros(3)


def test_zero_transform():
    assert cg_transform(DiscField.zeros()).allclose(DiscField.zeros())


def test_transform_of_one_is_zbar():
    assert cg_transform(mono(0, 0)).allclose(mono(0, 1), atol=0)


def test_transform_of_z():
    out = cg_transform(mono(1, 0))
    expected = DiscField.from_monomials({(1, 1): [1, 0], (0, 0): [-1, 0]})
    assert out.allclose(expected, atol=0)
    assert eval_field(out, 0)[0] == -1


def test_closed_form_against_quadrature(rng):
    # one-time validation of the monomial formula for T
    pts = 0.85 * np.sqrt(rng.uniform(size=20)) * np.exp(2j * np.pi * rng.uniform(size=20))
    for m, n in [(0, 0), (1, 0), (0, 1), (2, 1), (3, 0), (1, 2), (4, 2)]:
        tg = cg_transform(mono(m, n))
        for z in pts:
            ref = cauchy_green_quadrature(lambda w: w**m * np.conj(w) ** n, z)
            assert abs(eval_field(tg, z)[0] - ref) <= 1e-6


def test_dbar_dz_shifts():
    assert dbar(mono(0, 1)).allclose(mono(0, 0))
    for m in range(1, 6):
        assert dz(mono(m, 0)).allclose(mono(m - 1, 0) * m)
    assert dbar(mono(3, 0)).allclose(DiscField.zeros())


def test_round_trip_dbar_of_transform(rng):
    for _ in range(20):
        g = random_field(rng, max_deg=23)
        assert_exact(dbar(cg_transform(g)).coeffs, g.coeffs)


def test_overflow_when_no_headroom():
    with pytest.raises(TruncationOverflow):
        cg_transform(mono(0, 24))
    with pytest.raises(TruncationOverflow):
        DiscField.from_monomials({(25, 0): [1, 0]})


def test_transform_is_complex_linear(rng):
    g, h = random_field(rng, max_deg=20), random_field(rng, max_deg=20)
    a = 0.3 - 1.7j
    lhs = cg_transform(g * a + h)
    rhs = cg_transform(g) * a + cg_transform(h)
    assert np.abs(lhs.coeffs - rhs.coeffs).max() <= 1e-12


def test_transform_values_at_zero():
    assert eval_field(cg_transform(mono(0, 0)), 0)[0] == 0
    assert eval_field(cg_transform(mono(1, 0)), 0)[0] == -1


def test_constant_evaluates_everywhere(rng):
    c = DiscField.constant([1 + 2j, -0.5j])
    z = 0.9 * np.exp(1j * rng.uniform(0, 6, size=7))
    assert np.allclose(eval_field(c, z), [1 + 2j, -0.5j])


def test_trace_of_identity_disc():
    u = DiscField.holomorphic([[0, 0], [1, 0]])
    tr = boundary_trace(u, 128)
    assert np.allclose(tr.values[:, 0], np.exp(1j * tr.angles))
    assert np.allclose(tr.values[:, 1], 0)


def test_trace_matches_eval(rng):
    u = random_field(rng)
    tr = boundary_trace(u, 128)
    ref = eval_field(u, np.exp(1j * tr.angles))
    assert np.abs(tr.values - ref).max() <= 1e-13 * max(1.0, np.abs(ref).max())


def test_trace_invariants():
    with pytest.raises(ValueError):
        BoundaryTrace(np.zeros((100, 2), dtype=complex))
    with pytest.raises(ValueError):
        boundary_trace(DiscField.zeros(), 64)  # fewer than 4 M samples


def test_outside_disc():
    with pytest.raises(OutsideDisc):
        eval_field(DiscField.zeros(), 1.01)
    eval_field(DiscField.zeros(), 1 + 1e-13)


def test_norms_of_simple_fields():
    assert sup_norm(DiscField.zeros()) == 0
    assert c1_alpha_seminorm(DiscField.zeros()) == 0
    assert sup_norm(DiscField.holomorphic([[0, 0], [1, 0]])) == pytest.approx(1.0, abs=1e-14)


def test_seminorm_grid_refinement():
    u = DiscField.holomorphic([[0, 0], [0, 0], [1, 0]])
    coarse = c1_alpha_seminorm(u, 0.5, n_r=8, n_theta=24)
    fine = c1_alpha_seminorm(u, 0.5, n_r=16, n_theta=48)
    assert abs(coarse - fine) / fine <= 0.05


def test_json_round_trip(rng):
    u = random_field(rng, degree=6)
    d = u.to_json_dict()
    assert d["degree"] == 6 and len(d["components"]) == 2 and len(d["components"][0]) == 49
    # (m, n) row-major: entry 1 is z^0 zbar^1
    assert d["components"][0][1] == [u.coeffs[0, 1, 0].real, u.coeffs[0, 1, 0].imag]
    v = DiscField.from_json(json.dumps(d))
    assert np.array_equal(v.coeffs, u.coeffs)


def test_rescaled_matches_eval(rng):
    u = random_field(rng, degree=8)
    z = 0.7 * np.exp(1j * np.linspace(0, 6, 9))
    assert np.allclose(eval_field(u.rescaled(0.6), z), eval_field(u, 0.6 * z))


def test_collocation_projection_reproduces_polynomials(rng):
    # coefficients of moderate size; the fit is judged on values
    g = polar_grid(24, 128)
    u = random_field(rng, degree=24, max_deg=23)
    c = u.coeffs * (0.6 ** (np.arange(25)[:, None] + np.arange(25)[None, :]))[:, :, None]
    u = DiscField(c)
    w = g.project(g.values(u), n_max=23)
    z = 0.95 * np.sqrt(rng.uniform(size=50)) * np.exp(2j * np.pi * rng.uniform(size=50))
    assert np.abs(eval_field(w, z) - eval_field(u, z)).max() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 22), st.integers(0, 22), st.complex_numbers(max_magnitude=5, allow_nan=False, allow_subnormal=False))
def test_dbar_inverts_transform_monomialwise(m, n, a):
    g = DiscField.from_monomials({(m, n): [a, 1j * a]})
    assert_exact(dbar(cg_transform(g)).coeffs, g.coeffs)
