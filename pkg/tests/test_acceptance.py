"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n ... PASS/FAIL`` line (shown even
when output capture is on) and then asserts.
"""
import time

import numpy as np
import pytest

from oracles import cauchy_green_quadrature
from pshdisc.cli import parse_scenario, run_scenario
from pshdisc.disc_calculus import DiscField, boundary_trace, cg_transform, dbar, eval_field, sup_norm
from pshdisc.disc_solver import (
    estimate_c0,
    pde_residual,
    phi_map,
    psi_map,
    select_mode,
    solve_disc,
    structural_residual,
    translate_disc,
)
from pshdisc.domain import Domain, GridSpec
from pshdisc.envelope import (
    ScalarField,
    SearchConfig,
    continuity_report,
    envelope_field,
    neg_sq_z1,
    poletsky_envelope,
    sq_distance,
)
from pshdisc.psh_approx import approximation_pipeline
from pshdisc.structure import QMode, QTensor, named_structure, standard_structure

BALL = Domain(np.zeros(2), 1.0)
EPS = np.finfo(float).eps


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\nCRITERION {n} {title}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
        return ok

    return emit


def _random_poly(rng, max_deg, degree=24):
    c = np.zeros((degree + 1, degree + 1, 2), dtype=complex)
    m = np.add.outer(np.arange(degree + 1), np.arange(degree + 1)) <= max_deg
    c[m] = rng.normal(size=(m.sum(), 2)) + 1j * rng.normal(size=(m.sum(), 2))
    return DiscField(c)


def _random_target(rng, degree=24):
    c = 0.3 * (rng.normal(size=2) + 1j * rng.normal(size=2))
    a1 = rng.normal(size=2) + 1j * rng.normal(size=2)
    a2 = rng.normal(size=2) + 1j * rng.normal(size=2)
    return DiscField.holomorphic([c, 0.3 * a1 / np.linalg.norm(a1), 0.05 * a2 / np.linalg.norm(a2)], degree)


def test_criterion_1_cauchy_green(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_rel = 0.0
    for _ in range(100):
        g = _random_poly(rng, int(rng.integers(0, 21)))
        back = dbar(cg_transform(g)).coeffs
        nz = g.coeffs != 0
        worst_rel = max(worst_rel, float(np.max(np.abs(back - g.coeffs)[nz] / np.abs(g.coeffs[nz]), initial=0)))
        assert np.all(back[~nz] == 0)
    g = _random_poly(rng, 6)
    tg = cg_transform(g)
    pts = 0.9 * np.sqrt(rng.uniform(size=20)) * np.exp(2j * np.pi * rng.uniform(size=20))
    quad_err = 0.0
    for z in pts:
        for comp in range(2):
            ref = cauchy_green_quadrature(lambda w: eval_field(g, w)[..., comp], z)
            quad_err = max(quad_err, abs(eval_field(tg, z)[comp] - ref))
    elapsed = time.perf_counter() - t0
    ok = worst_rel <= 4 * EPS and quad_err <= 1e-6 and elapsed <= 10
    report(1, "Cauchy-Green identity", ok,
           f"max rel coeff error {worst_rel:.1e} (<= 4 ulp), quadrature error {quad_err:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_standard_collapse(report):
    rng = np.random.default_rng(2)
    Q = QTensor(standard_structure())
    worst_res, exact = 0.0, True
    for _ in range(10):
        h = _random_target(rng)
        v = solve_disc(h, Q)
        worst_res = max(worst_res, pde_residual(v, Q))
        exact &= np.array_equal(v.coeffs, h.coeffs)
        exact &= np.array_equal(phi_map(h, Q).coeffs, h.coeffs) and np.array_equal(psi_map(h, Q).coeffs, h.coeffs)
        V = 0.1 * rng.normal(size=2) * np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
        exact &= np.array_equal(translate_disc(h, V, Q).coeffs, (h + V).coeffs)
    c0 = estimate_c0(Q, [_random_target(rng)]).value
    ok = exact and worst_res <= 1e-12 and c0 == 1.0
    report(2, "standard-structure collapse", ok, f"identity maps exact={exact}, residual {worst_res:.1e}, C0={c0}")
    assert ok


@pytest.mark.parametrize("t", [0.01, 0.05])
def test_criterion_3_4_translation_and_jholomorphy(report, t):
    rng = np.random.default_rng(3)
    J = named_structure("conjugated", "bump", t, BALL)
    Q = QTensor(J)
    t0 = time.perf_counter()
    shift_err, ratio, struct = 0.0, 0.0, 0.0
    for _ in range(20):
        u = solve_disc(_random_target(rng), Q)
        V = rng.normal(size=2) + 1j * rng.normal(size=2)
        V *= rng.uniform(0.01, 0.1) / np.linalg.norm(V)
        c0 = estimate_c0(Q, [u, u + V])
        v = translate_disc(u, V, Q, c0=c0)
        lhs = boundary_trace(psi_map(v, Q), 128).values
        rhs = boundary_trace(psi_map(u, Q) + V, 128).values
        shift_err = max(shift_err, float(np.abs(lhs - rhs).max()))
        ratio = max(ratio, sup_norm(u - v) / (c0.value * np.linalg.norm(V)))
        struct = max(struct, structural_residual(u, J), structural_residual(v, J))
    elapsed = time.perf_counter() - t0
    ok3 = shift_err <= 1e-8 and ratio <= 1.1
    report(3, f"translation at t={t}", ok3,
           f"Psi shift error {shift_err:.1e}, max |u-v|/(C0|V|) = {ratio:.3f}, {elapsed:.0f}s")
    h = DiscField.holomorphic([[0.1, -0.2j], [0.8, 0.5j], [0.3, 0.3], [0.2j, 0.2]])
    mode, modes = select_mode(h, J)
    ok4 = struct <= 1e-6 and mode is QMode.ANTILINEAR and modes["linear"] > 1e-6
    report(4, f"J-holomorphy at t={t}", ok4,
           f"max structural residual {struct:.1e}, mode residuals {modes['antilinear']:.1e} / {modes['linear']:.1e}")
    assert ok3 and ok4


def test_criterion_5_envelope_sanity(report):
    Q = QTensor(standard_structure())
    t0 = time.perf_counter()
    f = sq_distance([0, 0], BALL)
    grid = GridSpec([0, 0], 0.3, 5, axes=(0, 1, 2, 3))
    env = envelope_field(f, BALL, Q, grid, SearchConfig(degree=1, n_starts=2, max_evals=20), warm_start=False)
    fv = f(grid.nodes())
    psh_err = float(np.max(np.abs(env.field.values - fv)))
    below = bool(np.all(env.field.values <= fv))
    origin = poletsky_envelope(neg_sq_z1(BALL), BALL, [0, 0], Q)
    below &= origin.value <= origin.upper_bound_f_at_p
    g = neg_sq_z1(BALL)
    h = ScalarField(lambda z: g(z) + 0.2 * np.abs(z[..., 1]) ** 2, domain=BALL)
    mono = -np.inf
    rng_pts = np.random.default_rng(5)
    cfg = SearchConfig(degree=1, n_starts=2, max_evals=60)
    for k in range(5):
        p = 0.3 * (rng_pts.uniform(-1, 1, 2) + 1j * rng_pts.uniform(-1, 1, 2))
        eh = poletsky_envelope(h, BALL, p, Q, cfg, rng=np.random.default_rng([0, k]))
        eg = poletsky_envelope(g, BALL, p, Q, cfg, hints=[eh.best_disc], rng=np.random.default_rng([0, k]))
        mono = max(mono, eg.value - eh.value)
        below &= eg.value <= eg.upper_bound_f_at_p and eh.value <= eh.upper_bound_f_at_p
    ok = below and psh_err <= 1e-3 and -1 <= origin.value <= -0.95 and mono <= 1e-9
    report(5, "envelope sanity", ok,
           f"psh |Pf-f| {psh_err:.1e} on 5^4 nodes, P(-|z1|^2)(0) = {origin.value:.5f}, "
           f"max Pg-Ph {mono:.2e}, {time.perf_counter() - t0:.0f}s")
    assert ok


@pytest.mark.parametrize("t", [0.0, 0.05])
def test_criterion_6_modulus(report, t):
    J = standard_structure() if t == 0 else named_structure("conjugated", "bump", t, BALL)
    Q = QTensor(J)
    f = neg_sq_z1(BALL)  # Lipschitz with L = 2 on the unit ball
    n, hw = (4, 0.3) if t == 0 else (3, 0.2)
    grid = GridSpec([0, 0], hw, n)
    env = envelope_field(f, BALL, Q, grid, SearchConfig(degree=1, n_starts=2, max_evals=60))
    c0 = 1.0 if env.c0 is None else env.c0.value
    slack = 1.0 if t == 0 else 1.1
    rep = continuity_report(env.field, f.modulus, c0, tolerance=5e-3, slack=slack)
    ok = rep.passed and not env.partial
    report(6, f"modulus bound at t={t}", ok,
           f"C0={c0:.4f}, worst excess over omega({slack} C0 x) = {rep.worst_excess:.2e}")
    assert ok


@pytest.mark.parametrize("t", [0.0, 0.05])
def test_criterion_7_pipeline(report, t):
    J = standard_structure() if t == 0 else named_structure("conjugated", "bump", t, BALL)
    t0 = time.perf_counter()
    seq = approximation_pipeline(sq_distance([0, 0], BALL), BALL, QTensor(J), 4)
    names = {c.name for c in seq.certificates}
    needed = {"psi_decreasing", "sandwich", "psi_psh", "interior_error", "interior_error_decreasing"}
    errs = [c.worst for c in seq.certificates if c.name == "interior_error"]
    failed = [f"{c.name}[k={c.k}]" for c in seq.certificates if not c.passed]
    ok = seq.passed and needed <= names and len(seq.stages) == 4
    report(7, f"pipeline at t={t}", ok,
           f"interior errors {', '.join(f'{e:.3f}' for e in errs)}; failed {failed or 'none'}; "
           f"{time.perf_counter() - t0:.0f}s")
    assert ok


def test_criterion_8_determinism(report, tmp_path):
    text = """
[scenario]
structure = conjugated
perturbation = bump
amplitude = 0.05
function = neg_sq_z1
seed = 11

[task envelope]
point = 0.1, -0.1j
degree = 1
starts = 3
max_evals = 40

[task envelope-field field]
half_width = 0.15
nodes = 2
starts = 2
max_evals = 30
"""
    codes, outs = [], []
    for name in ("first", "second"):
        codes.append(run_scenario(parse_scenario(text), tmp_path / name, verbose=True))
        outs.append(tmp_path / name)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    csvs = [f for f in files if f.suffix == ".csv"]
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    ok = same and len(csvs) >= 2 and codes == [0, 0]
    report(8, "determinism", ok, f"{len(files)} files ({len(csvs)} CSV) byte-identical={same}, exit codes {codes}")
    assert ok
