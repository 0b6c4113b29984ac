"""Tests for the end-to-end assembly and verification module.

The effective-coefficient chain for diagonal restrictions of midpoint-form
pair fields is re-derived symbolically here (quaternion Dirac operators,
sympy doing the calculus) before any test trusts the frozen constants in
``SobolevBurgersSpec.effective_coefficients``.
"""

import numpy as np
import pytest
import sympy as sp

from cdburgers.calculus import Grid
from cdburgers.kernel import admissible_kappa, aux_residual
from cdburgers.randmeasure import expectation, sample_H
from cdburgers.workbench import (
    AtomParams,
    SobolevBurgersSpec,
    SpectralPoint,
    assemble_u,
    atom_kernel_config,
    characteristic_kappa,
    lambda_to_params,
    measure_for_atoms,
    moment_identity,
    refinement_study,
    residual_suite,
    study_csv,
)


# -- symbolic oracle for the diagonal-restriction scaling chain ----------------
#
# Quaternion product table in the cyclic convention e1 e2 = e3, written out
# by hand so the derivation does not depend on the library's doubling tables.

_QTABLE = {
    (0, 0): (0, 1), (0, 1): (1, 1), (0, 2): (2, 1), (0, 3): (3, 1),
    (1, 0): (1, 1), (1, 1): (0, -1), (1, 2): (3, 1), (1, 3): (2, -1),
    (2, 0): (2, 1), (2, 1): (3, -1), (2, 2): (0, -1), (2, 3): (1, 1),
    (3, 0): (3, 1), (3, 1): (2, 1), (3, 2): (1, -1), (3, 3): (0, -1),
}


def _qmul(u, v):
    out = [sp.Integer(0)] * 4
    for i in range(4):
        for j in range(4):
            k, sign = _QTABLE[(i, j)]
            out[k] += sign * u[i] * v[j]
    return out


def _symbolic_dirac(components, coords, psi):
    """sigma f = sum_j conj(e_j) (df/dx_j) psi on quaternion components."""
    out = [sp.Integer(0)] * 4
    for j, xj in enumerate(coords, start=1):
        ej_conj = [sp.Integer(0)] * 4
        ej_conj[j] = sp.Integer(-1)
        df = [sp.diff(c, xj) * psi for c in components]
        term = _qmul(ej_conj, df)
        out = [a + b for a, b in zip(out, term)]
    return out


def _midpoint_chain():
    """Pair operators applied symbolically to G = exp(k . (x + y)/2)."""
    x1, x2, y1, y2 = sp.symbols("x1 x2 y1 y2", real=True)
    k1, k2 = sp.symbols("k1 k2", real=True)
    psi = 1 / sp.sqrt(2)
    f = sp.exp((k1 * (x1 + y1) + k2 * (x2 + y2)) / 2)
    comp = [f, sp.Integer(0), sp.Integer(0), sp.Integer(0)]
    sx = _symbolic_dirac(comp, (x1, x2), psi)
    sy = _symbolic_dirac(comp, (y1, y2), psi)
    first = [sp.expand(a + b) for a, b in zip(sx, sy)]
    sxx = _symbolic_dirac(_symbolic_dirac(comp, (x1, x2), psi),
                          (x1, x2), psi)
    syy = _symbolic_dirac(_symbolic_dirac(comp, (y1, y2), psi),
                          (y1, y2), psi)
    pair_lap = [sp.expand(a + b) for a, b in zip(sxx, syy)]
    return f, (k1, k2), first, pair_lap


def test_pair_laplacian_on_midpoint_fields_is_quarter_laplacian():
    f, (k1, k2), _, pair_lap = _midpoint_chain()
    for c in pair_lap[1:]:
        assert sp.simplify(c) == 0
    factor = sp.simplify(pair_lap[0] / f)
    assert sp.simplify(factor + (k1**2 + k2**2) / 4) == 0


def test_first_order_pair_term_projects_to_scaled_gradient():
    f, (k1, k2), first, _ = _midpoint_chain()
    assert sp.simplify(first[0]) == 0
    assert sp.simplify(first[3]) == 0
    assert sp.simplify(first[1] / f + k1 / sp.sqrt(2)) == 0
    assert sp.simplify(first[2] / f + k2 / sp.sqrt(2)) == 0


def test_effective_coefficients_frozen_by_symbolic_chain():
    # symbolic factors established above: (sigma_x^2 + sigma_y^2) acts on
    # midpoint-form fields as c2 * Lap with c2 = -1/4, and the slot-1
    # component of (sigma_x + sigma_y) as c1 * d/dx_1 with c1 = -1/sqrt(2)
    c2 = sp.Rational(-1, 4)
    c1 = -1 / sp.sqrt(2)
    alpha, beta, gamma, varsigma = sp.symbols(
        "alpha beta gamma varsigma", real=True)
    L = sp.Symbol("L")  # stands for the scalar Laplacian
    # fourth-order pair operator with a = (-1, -alpha, beta), restricted
    s0_diag = sp.expand(-((c2 * L) ** 2) - alpha * (c2 * L) + beta)
    scale = 16  # normalizes the Lap^2 coefficient to -1
    poly = sp.Poly(scale * s0_diag, L)
    eff_alpha = poly.coeff_monomial(L)
    eff_beta = poly.coeff_monomial(1)
    assert poly.coeff_monomial(L**2) == -1
    eff_gamma = sp.simplify(scale * gamma * c1)
    eff_varsigma = scale * varsigma

    rng = np.random.default_rng(11)
    for _ in range(5):
        av, bv, gv, sv = rng.uniform(-2, 2, size=4)
        if av == 0:
            av = 1.0
        spec = SobolevBurgersSpec(alpha=av, beta=bv, gamma=gv, varsigma=sv,
                                  c=(0.0,))
        got = spec.effective_coefficients()
        subs = {alpha: av, beta: bv, gamma: gv, varsigma: sv}
        assert got["alpha"] == pytest.approx(float(eff_alpha.subs(subs)),
                                             rel=1e-15)
        assert got["beta"] == pytest.approx(float(eff_beta.subs(subs)),
                                            rel=1e-15)
        assert got["gamma"] == pytest.approx(float(eff_gamma.subs(subs)),
                                             rel=1e-15)
        assert got["varsigma"] == pytest.approx(
            float(eff_varsigma.subs(subs)), rel=1e-15)


# -- problem data validation ---------------------------------------------------


def test_spec_validation_messages():
    ok = dict(alpha=1.0, beta=0.0, gamma=1.0, varsigma=0.0, c=(0.0,))
    with pytest.raises(ValueError, match="alpha must be nonzero"):
        SobolevBurgersSpec(**{**ok, "alpha": 0.0})
    with pytest.raises(ValueError, match="gamma"):
        SobolevBurgersSpec(**{**ok, "gamma": 0.0, "varsigma": 0.0})
    with pytest.raises(ValueError, match="at least 2"):
        SobolevBurgersSpec(**{**ok, "n": 1})
    with pytest.raises(ValueError, match="algebra level too small"):
        SobolevBurgersSpec(**{**ok, "n": 4, "level": 2})
    with pytest.raises(ValueError, match="degree >= 1"):
        SobolevBurgersSpec(**{**ok, "c": ()})
    with pytest.raises(ValueError, match="degenerate box"):
        SobolevBurgersSpec(**{**ok, "lo": 1.0, "hi": 1.0})
    with pytest.raises(ValueError, match="horizon must be positive"):
        SobolevBurgersSpec(**{**ok, "horizon": 0.0})


def test_spec_properties():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.5, gamma=0.2, varsigma=0.0,
                              c=(0.0, 1.0), lo=-1.0, hi=3.0, horizon=2.0)
    assert spec.m == 2
    grid = spec.grid(9, 5)
    assert grid.n == 2
    assert grid.counts == (9, 9)
    assert grid.t_count == 5
    assert grid.t_max == 2.0
    assert grid.axis(0)[0] == -1.0 and grid.axis(0)[-1] == 3.0


def test_spectral_point_validation_and_properties():
    with pytest.raises(ValueError, match="at least 4 entries"):
        SpectralPoint((1.0, 2.0, 3.0))
    with pytest.raises(ValueError, match="lambda_1 must be nonzero"):
        SpectralPoint((0.0, 1.0, 1.0, 1.0))
    point = SpectralPoint((2.0, -0.5, 0.25, 0.75, 0.1))
    assert point.m == 2
    assert point.lam_prime == (2.0, -0.5, 0.25)
    assert point.p == (0.75, 0.1)


# -- parameter mapping ---------------------------------------------------------


def test_lambda_to_params_worked_example():
    # lambda_1 = 1 with alpha = 1, beta = 0 gives a = (-1, -1, 0); the
    # nonlinearity weight doubles the product of lambda_1 and the coupling
    # entry, and the amplitude rule value is gamma over that weight
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1.0, varsigma=0.0,
                              c=(0.0,))
    point = SpectralPoint((1.0, -0.5, 0.5, 0.0))
    params = lambda_to_params(point, spec)
    assert params.a == (-1.0, -1.0, 0.0)
    assert params.q == (1.0, 0.0)
    assert params.p == (0.5, 0.0)
    assert params.xi == 1.0


def test_lambda_to_params_zero_coupling_entry_kills_weight():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=0.0, varsigma=2.0,
                              c=(0.0,))
    point = SpectralPoint((1.0, -0.5, 0.0, 0.25))
    params = lambda_to_params(point, spec)
    assert params.q[0] == 0.0
    assert params.q[1] == 0.5
    assert params.xi == pytest.approx(4.0)


def test_lambda_to_params_weight_identity_is_exact():
    rng = np.random.default_rng(3)
    spec = SobolevBurgersSpec(alpha=1.3, beta=-0.7, gamma=2.3, varsigma=1.7,
                              c=(0.4,))
    for _ in range(20):
        lam1 = float(rng.uniform(0.2, 3.0))
        lam2 = float(rng.uniform(-1.0, 1.0))
        t = float(rng.uniform(0.1, 0.9))
        point = SpectralPoint((lam1, lam2, t * spec.gamma, t * spec.varsigma))
        params = lambda_to_params(point, spec)
        assert params.q[0] + 2.0 * params.a[0] * params.p[0] == 0.0
        assert params.q[1] + 2.0 * params.a[1 - 1] * params.p[1] == 0.0


def test_lambda_to_params_matches_kernel_config_weights():
    spec = SobolevBurgersSpec(alpha=1.3, beta=0.5, gamma=2.3, varsigma=1.7,
                              c=(0.4,))
    point = SpectralPoint.matched(spec, (1.0, -0.5))
    params = lambda_to_params(point, spec)
    cfg = atom_kernel_config(point, spec, (0.0, 0.0))
    assert complex(cfg.q[0]) == complex(params.q[0])
    assert complex(cfg.q[1]) == complex(params.q[1])
    assert cfg.a == params.a
    assert cfg.kappa == characteristic_kappa(spec)


def test_lambda_to_params_error_messages():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1.0, varsigma=0.0,
                              c=(0.0,))
    with pytest.raises(ValueError, match="temporal degree"):
        lambda_to_params(SpectralPoint((1.0, 0.1, 0.2, 0.5, 0.0)), spec)
    both = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1.0, varsigma=1.0,
                              c=(0.0,))
    with pytest.raises(ValueError, match="constraint p_2 gamma"):
        lambda_to_params(SpectralPoint((1.0, -0.5, 0.5, 0.1)), both)
    with pytest.raises(ValueError, match="p_1 must vanish"):
        lambda_to_params(SpectralPoint((1.0, -0.5, 0.0, 0.0)), both)
    only_s = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=0.0, varsigma=1.0,
                                c=(0.0,))
    with pytest.raises(ValueError, match="p_2 must vanish"):
        lambda_to_params(SpectralPoint((1.0, -0.5, 0.0, 0.0)), only_s)


def test_matched_point_closes_amplitude_rule():
    spec = SobolevBurgersSpec(alpha=2.0, beta=-0.25, gamma=0.3, varsigma=0.9,
                              c=(0.1,))
    point = SpectralPoint.matched(spec, (1.0, 0.7))
    assert point.lam == (1.0, 0.7, 0.15, 0.45)
    params = lambda_to_params(point, spec)
    assert params.xi == 1.0
    assert params.q[0] == spec.gamma
    assert params.q[1] == spec.varsigma

    half = SpectralPoint.matched(spec, (0.5, 0.7))
    assert lambda_to_params(half, spec).xi == 1.0

    odd = SpectralPoint.matched(spec, (3.0, 0.7))
    assert lambda_to_params(odd, spec).xi == pytest.approx(1.0, rel=1e-14)

    with pytest.raises(ValueError, match="temporal vector needs 2 entries"):
        SpectralPoint.matched(spec, (1.0, 0.7, 0.2))


def test_matched_point_varsigma_branch():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=0.0, varsigma=0.8,
                              c=(0.0,))
    point = SpectralPoint.matched(spec, (1.0, -0.5))
    assert point.p == (0.0, 0.4)
    params = lambda_to_params(point, spec)
    assert params.xi == 1.0
    assert params.q == (0.0, 0.8)


def test_characteristic_kappa_burgers_configuration():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1.0, varsigma=0.0,
                              c=(0.0,))
    # k^4/16 - k^2/4 = 0 has the positive root k = 2
    assert characteristic_kappa(spec) == (-2.0, 0.0)
    assert characteristic_kappa(spec) == admissible_kappa(
        (-1.0, -1.0, 0.0), 2)


def test_characteristic_kappa_is_lambda_free():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1.0, varsigma=0.0,
                              c=(0.0,))
    for lam1 in (1.0, 0.5, 3.0):
        point = SpectralPoint.matched(spec, (lam1, -0.5))
        cfg = atom_kernel_config(point, spec, (0.0, 0.0))
        assert cfg.kappa == (-2.0, 0.0)


# -- measure construction ------------------------------------------------------


def test_measure_for_atoms_reps_amplitudes_seed():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1e-5, varsigma=0.0,
                              c=(0.0,))
    a0 = SpectralPoint.matched(spec, (1.0, -0.5))
    a1 = SpectralPoint.matched(spec, (1.0, -1.0))
    measure = measure_for_atoms([a0, a1], spec, (0.25, 0.75), seed=7)
    assert measure.partition.reps == (a0.lam, a1.lam)
    assert measure.xi == (1.0, 1.0)
    assert measure.p == (0.25, 0.75)
    assert measure.seed == 7


def test_measure_for_atoms_accepts_real_complex_entries():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1e-5, varsigma=0.0,
                              c=(0.0,))
    point = SpectralPoint((1.0 + 0.0j, -0.5, 5e-6, 0.0))
    measure = measure_for_atoms([point], spec, (1.0,))
    assert measure.partition.reps == ((1.0, -0.5, 5e-6, 0.0),)


def test_measure_for_atoms_rejects_complex_lambda():
    spec = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1e-5, varsigma=0.0,
                              c=(0.0,))
    point = SpectralPoint((1.0 + 0.2j, -0.5, 5e-6, 0.0))
    with pytest.raises(ValueError, match="real lambda representatives"):
        measure_for_atoms([point], spec, (1.0,))


# -- assembly ------------------------------------------------------------------


_SPEC = SobolevBurgersSpec(alpha=1.0, beta=0.0, gamma=1e-5, varsigma=0.0,
                           c=(0.0,), n=2, lo=-0.5, hi=4.5, horizon=1.0)
_W0 = (0.0, 0.0)


@pytest.fixture(scope="module")
def single_atom():
    point = SpectralPoint.matched(_SPEC, (1.0, -0.5))
    measure = measure_for_atoms([point], _SPEC, (1.0,))
    grid = _SPEC.grid(21, 9)
    sol = assemble_u([point], measure, grid, _SPEC, _W0, probes=8)
    return sol


@pytest.fixture(scope="module")
def two_atoms():
    a0 = SpectralPoint.matched(_SPEC, (1.0, -0.5))
    a1 = SpectralPoint.matched(_SPEC, (1.0, -1.0))
    measure = measure_for_atoms([a0, a1], _SPEC, (0.25, 0.75), seed=5)
    grid = _SPEC.grid(11, 7)
    sol = assemble_u([a0, a1], measure, grid, _SPEC, _W0, probes=4)
    return sol


def test_assemble_validations():
    point = SpectralPoint.matched(_SPEC, (1.0, -0.5))
    other = SpectralPoint.matched(_SPEC, (1.0, -1.0))
    measure = measure_for_atoms([point], _SPEC, (1.0,))
    grid = _SPEC.grid(7, 7)
    with pytest.raises(ValueError, match="do not match the atom list"):
        assemble_u([point, other], measure, grid, _SPEC, _W0)
    with pytest.raises(ValueError, match="do not match the atom list"):
        assemble_u([other], measure, grid, _SPEC, _W0)
    flat = Grid.box(2, -0.5, 4.5, 7)
    with pytest.raises(ValueError, match="grid with a time axis"):
        assemble_u([point], measure, flat, _SPEC, _W0)


def test_assemble_reports_temporal_blowup():
    runaway = SpectralPoint.matched(_SPEC, (1e4, 1.0))
    measure = measure_for_atoms([runaway], _SPEC, (1.0,))
    grid = _SPEC.grid(7, 9)
    with pytest.raises(RuntimeError, match="temporal factor blew up"):
        assemble_u([runaway], measure, grid, _SPEC, _W0)


def test_single_atom_field_is_separated_product(single_atom):
    sol = single_atom
    assert sol.size == 1
    phi = sol.trajectories[0].values
    kvals = sol.kernels[0].K.values
    t_count, count = sol.grid.t_count, sol.grid.counts[0]
    diag = kvals[np.arange(count)[:, None], np.arange(count)[None, :],
                 np.arange(count)[:, None], np.arange(count)[None, :]]
    want = phi.reshape(t_count, 1, 1) * diag[None]
    assert np.array_equal(sol.atom_diag[0], want)
    assert np.array_equal(sol.mean_diagonal(), sol.atom_diag[0])


def test_diagonal_of_pair_mean_matches_diagonal_mean(single_atom):
    sol = single_atom
    count = sol.grid.counts[0]
    idx = np.arange(count)
    for ti in (0, sol.grid.t_count // 2, sol.grid.t_count - 1):
        pair = sol.mean_pair(ti)
        diag = pair[idx[:, None], idx[None, :], idx[:, None], idx[None, :]]
        assert np.array_equal(diag, sol.mean_diagonal()[ti])
        pair2 = sol.second_pair(ti)
        diag2 = pair2[idx[:, None], idx[None, :], idx[:, None],
                      idx[None, :]]
        assert np.array_equal(diag2, sol.second_moment_diagonal()[ti])


def test_single_atom_moment_identity_is_exact(single_atom):
    report = moment_identity(single_atom, samples=2000)
    assert report["structure_gap"] == 0.0
    assert report["structure_ok"]
    assert report["mean_square_gap"] == 0.0
    assert report["mean_square_exact"]
    assert report["mc"]["mean_ok"]
    assert report["mc"]["second_ok"]


def test_two_atom_mixture_breaks_mean_square_identity(two_atoms):
    report = moment_identity(two_atoms, samples=4000)
    assert report["structure_ok"]
    assert report["mean_square_gap"] > 1e-6
    assert not report["mean_square_exact"]
    assert report["mc"]["mean_ok"]
    assert report["mc"]["second_ok"]


def test_two_atom_mean_matches_monte_carlo(two_atoms):
    sol = two_atoms
    real = sample_H(sol.measure, 3000)
    t_index, node = 3, (3, 3)
    vals = sol.sample_node(real, t_index, node)
    mean, se = expectation(vals)
    outcomes, weights = sol.enumerate_node(t_index, node)
    want = np.dot(weights, outcomes)
    assert abs(mean - want) <= 3.0 * float(abs(se)) + 1e-12
    assert abs(want - sol.mean_diagonal()[(t_index,) + node]) < 1e-15


def test_expectation_linearity_over_atoms(two_atoms):
    sol = two_atoms
    total = sol.mean_diagonal()
    parts = sum(sol.measure.p[j] * sol.atom_diag[j]
                for j in range(sol.size))
    assert np.array_equal(total, parts)


# -- residual suite ------------------------------------------------------------


def test_residual_suite_window_errors(single_atom):
    with pytest.raises(ValueError, match="grid too coarse"):
        residual_suite(single_atom, collar=3.0)
    with pytest.raises(ValueError, match="too few time samples"):
        residual_suite(single_atom, collar=2.0, t_collar=0.9)


def test_residual_suite_values(single_atom):
    res = residual_suite(single_atom, collar=2.0, t_collar=0.25)
    assert res["collar_cells"] == 8
    assert res["t_rows"] == 2
    assert res["h"] == 0.25
    assert res["tau"] == 0.125
    for key in ("linear", "pair", "expectation", "diagonal_mean",
                "diagonal_expect"):
        assert np.isfinite(res[key])
        assert res[key] >= 0.0
    # coarse-grid magnitudes for this configuration sit well below the
    # kernel scale but above machine precision
    assert res["pair"] < 1e-3
    assert res["pair"] > 1e-12
    assert res["diagonal_mean"] < 1e-2
    # the nonlinear data differ between the two quadratic routes only at
    # the coupling scale, so both diagonal residuals must be close
    assert res["diagonal_expect"] == pytest.approx(res["diagonal_mean"],
                                                   rel=1e-6)


def test_pair_residual_agrees_with_kernel_route(single_atom):
    sol = single_atom
    want = aux_residual(sol.kernels[0].K, sol.kernels[0].F,
                        sol.kernels[0].config, sol.grid, collar=2.0)
    res = residual_suite(sol, collar=2.0, t_collar=0.25)
    assert res["pair"] == want


# -- refinement studies --------------------------------------------------------


def test_refinement_study_repeated_level_is_deterministic():
    rows = refinement_study(_SPEC, (1.0, -0.5), [(21, 9), (21, 9)], _W0,
                            collar=2.0, t_collar=0.25, probes=4)
    assert len(rows) == 2
    first, second = rows
    for key in ("linear", "pair", "expectation", "diagonal_mean",
                "diagonal_expect"):
        assert second[key] == first[key]
        assert second[f"{key}_ratio"] == 1.0
    assert "linear_ratio" not in first
    assert first["mean_square_exact"] is True
    assert first["structure_gap"] == 0.0


def test_study_csv_layout_and_float_round_trip():
    rows = [
        {"count": 5, "t_count": 5, "h": 0.5, "tau": 0.25,
         "linear": 1.25e-3, "pair": 2.5e-4, "expectation": 3.5e-5,
         "diagonal_mean": 4.5e-6, "diagonal_expect": 5.5e-7},
        {"count": 9, "t_count": 9, "h": 0.25, "tau": 0.125,
         "linear": 6.25e-5, "pair": 1.25e-5, "expectation": 1.75e-6,
         "diagonal_mean": 2.25e-7, "diagonal_expect": 2.75e-8,
         "linear_ratio": 0.05, "pair_ratio": 0.05,
         "expectation_ratio": 0.05, "diagonal_mean_ratio": 0.05,
         "diagonal_expect_ratio": 0.05},
    ]
    text = study_csv(rows)
    lines = text.splitlines()
    assert lines[0].startswith("count,t_count,h,tau,linear,pair")
    assert lines[0].count(",") == 13
    cells = lines[1].split(",")
    assert cells[0] == "5"
    assert float(cells[4]) == 1.25e-3
    assert cells[10] == ""  # no ratios on the first level
    assert float(lines[2].split(",")[10]) == 0.05
    assert study_csv(rows) == text
