"""Geometry constructors: bases, bundles, hypercomplex and special metrics."""

import numpy as np
import pytest

from qklab.jets import ChartPoint, lift_coordinate, sample_box
from qklab.forms import (
    exterior_derivative,
    max_abs_coeff,
    one_form,
    two_form,
    wedge,
)
from qklab.curvature import einstein_residual, riemann_ricci_scalar
from qklab.spaces import (
    ConstructionError,
    KFormField,
    balanced_check,
    build_hypercomplex,
    build_total_space,
    build_xi_eta_bundle,
    expected_lambda,
    exponential_profiles,
    flat_base,
    gh_linear_potential,
    gibbons_hawking,
    hypercomplex_nijenhuis_residual,
    lift_form,
    ricci_flat_specials,
    structure_equation_residual,
    verify_hk,
)


def pts_for(model_or_base, count, seed):
    return sample_box(model_or_base.box, count, seed)


# -- flat base ---------------------------------------------------------------


def test_flat_base_triple_and_potentials():
    base = flat_base(n=1)
    pts = pts_for(base, 10, 0)
    res = verify_hk(base, pts)
    assert res["d_sigma"] <= 1e-14
    assert res["d_kappa_minus_sigma"] <= 1e-14
    assert res["wedge_relations"] <= 1e-12
    assert res["quaternion_relations"] <= 1e-12


def test_flat_base_radial_kappa():
    base = flat_base(n=1, kappa="radial")
    pts = pts_for(base, 10, 1)
    assert verify_hk(base, pts)["d_kappa_minus_sigma"] <= 1e-14


def test_flat_base_n2():
    base = flat_base(n=2)
    pts = pts_for(base, 5, 2)
    res = verify_hk(base, pts)
    assert res["d_sigma"] <= 1e-14
    assert res["quaternion_relations"] <= 1e-12


# -- Gibbons-Hawking ----------------------------------------------------------


def test_gh_linear_accepted_and_hk():
    base = gh_linear_potential()
    pts = pts_for(base, 8, 3)
    res = verify_hk(base, pts)
    assert res["d_sigma"] <= 1e-13
    assert res["d_kappa_minus_sigma"] <= 1e-13
    assert res["wedge_relations"] <= 1e-12
    assert res["quaternion_relations"] <= 1e-10


def test_gh_linear_ricci_flat():
    base = gh_linear_potential()
    pts = pts_for(base, 4, 4)
    assert einstein_residual(base.g, 0.0, pts) <= 1e-8


def test_gh_trivial_flat():
    dim = 4
    one = lift_coordinate(0, dim) * 0.0 + 1.0
    theta = one_form(dim, {3: 1.0})
    base = gibbons_hawking(one, theta)
    for p in pts_for(base, 3, 5):
        c = riemann_ricci_scalar(base.g, p)
        assert np.max(np.abs(c.riemann)) <= 1e-12


def test_gh_nonharmonic_rejected():
    dim = 4
    u1 = lift_coordinate(0, dim)
    theta = one_form(dim, {3: 1.0, 1: lift_coordinate(2, dim)})
    with pytest.raises(ConstructionError):
        gibbons_hawking(u1 * u1, theta)


def test_gh_connection_mismatch_rejected():
    dim = 4
    u1 = lift_coordinate(0, dim)
    theta = one_form(dim, {3: 1.0})  # d theta = 0 != -*du1
    with pytest.raises(ConstructionError):
        gibbons_hawking(u1, theta)


# -- warped bundles ------------------------------------------------------------


@pytest.fixture(scope="module")
def flat1():
    return flat_base(n=1)


@pytest.fixture(scope="module")
def n8_flat(flat1):
    return build_total_space(flat1, exponential_profiles(), "N")


def test_q_model_metric_is_warped_product(flat1):
    model = build_total_space(flat1, exponential_profiles(), "Q")
    p = ChartPoint(np.array([0.2, 0.1, -0.3, 0.4, 0.0]))
    m = model.metric.eval(p).value
    e2t = np.exp(0.4)
    expect = np.diag([1.0] + [e2t] * 4)
    assert np.allclose(m, expect, atol=1e-14)


def test_structure_equations_flat(n8_flat):
    pts = pts_for(n8_flat, 20, 6)
    assert structure_equation_residual(n8_flat, pts) <= 1e-10


def test_structure_equations_broken_kappa(flat1):
    base = flat_base(n=1)
    base.kappa = (base.kappa[0], KFormField.zero(4, 1), base.kappa[2])
    broken = build_total_space(base, exponential_profiles(), "N", validate=False)
    p = ChartPoint(np.array([0.1, 0.2, -0.1, 0.3, 0.25, -0.4, 0.35, 0.15]))
    assert structure_equation_residual(broken, [p]) > 0.1


def test_qk_four_form_closed(n8_flat):
    d_omega = exterior_derivative(n8_flat.forms["Omega"])
    for p in pts_for(n8_flat, 20, 7):
        assert max_abs_coeff(d_omega, p) <= 1e-10


def test_qk_four_form_closed_gh_base():
    base = gh_linear_potential()
    model = build_total_space(base, exponential_profiles(), "N")
    d_omega = exterior_derivative(model.forms["Omega"])
    for p in pts_for(model, 10, 8):
        assert max_abs_coeff(d_omega, p) <= 1e-10


def test_kahler_form_closed_and_potential(flat1):
    from qklab.curvature import acs_from_pair
    from qklab.forms import dc_derivative

    model = build_total_space(flat1, exponential_profiles(), "P")
    omega_p = model.forms["omega_P"]
    d_omega = exterior_derivative(omega_p)
    J = acs_from_pair(model.metric, omega_p)
    t = lift_coordinate(0, model.dim)
    half_ddc = exterior_derivative(dc_derivative(t, J)) * -0.5
    for p in pts_for(model, 10, 9):
        assert max_abs_coeff(d_omega, p) <= 1e-10
        co = omega_p.coeffs(p)
        ch = half_ddc.coeffs(p)
        for k in set(co) | set(ch):
            a = co[k].value if k in co else 0.0
            b = ch[k].value if k in ch else 0.0
            assert abs(a - b) <= 1e-10


def test_upsilon_p_closed(flat1):
    model = build_total_space(flat1, exponential_profiles(), "P")
    d_ups = model.complex_forms["Upsilon_P"].d()
    for p in pts_for(model, 10, 10):
        assert d_ups.max_abs_coeff(p) <= 1e-12


def test_einstein_constants_flat(flat1):
    prof = exponential_profiles()
    for which in ("Q", "P", "L", "N"):
        model = build_total_space(flat1, prof, which)
        lam = expected_lambda(which, 1)
        pts = pts_for(model, 4, 11)
        assert einstein_residual(model.metric, lam, pts) <= 1e-8, which


def test_einstein_constant_gh_base():
    # the quaternion-Kahler constant is base-independent
    base = gh_linear_potential()
    model = build_total_space(base, exponential_profiles(), "N")
    pts = pts_for(model, 2, 12)
    assert einstein_residual(model.metric, -16.0, pts) <= 1e-7


def test_submersion_block(n8_flat):
    # horizontal lifts of base directions recover e^{2t} g_M componentwise
    from qklab.forms import VectorField, pair_one_form

    model = n8_flat
    base = model.base
    al, xi, eta = model.forms["alpha"], model.forms["xi"], model.forms["eta"]
    for p in pts_for(model, 5, 13):
        e2t = np.exp(2 * p[0])
        for i in range(4):
            for j in range(4):
                hi = _horizontal_lift(model, i)
                hj = _horizontal_lift(model, j)
                val = model.metric.inner(hi, hj)(p).value
                assert abs(val - e2t * (1.0 if i == j else 0.0)) <= 1e-12


def _horizontal_lift(model, base_index):
    from qklab.forms import VectorField, pair_one_form

    dim = model.dim
    coord = VectorField.coordinate(dim, 4 + base_index)
    a1 = pair_one_form(model.forms["alpha"], coord)
    a2 = pair_one_form(model.forms["xi"], coord)
    a3 = pair_one_form(model.forms["eta"], coord)
    correction = VectorField.from_components(dim, {1: -1.0 * a1, 2: -1.0 * a2, 3: -1.0 * a3})
    return coord + correction


# -- hypercomplex ---------------------------------------------------------------


def nu_potential_asd(base):
    x = [lift_coordinate(i, 4) for i in range(4)]
    return one_form(4, {1: x[0], 3: -1.0 * x[2]})  # d = dx12 - dx34


def test_hypercomplex_mixed_integrable():
    base = flat_base(n=1, torus=True)
    model = build_hypercomplex(base, [nu_potential_asd(base)])
    pts = pts_for(model, 10, 14)
    assert hypercomplex_nijenhuis_residual(model, pts) <= 1e-9


def test_hypercomplex_product_structure():
    base = flat_base(n=1, torus=True)
    model = build_hypercomplex(base, [None, None, None, None])
    pts = pts_for(model, 5, 15)
    assert hypercomplex_nijenhuis_residual(model, pts) <= 1e-12


def test_hypercomplex_abelian_integrable():
    base = flat_base(n=1, torus=True)
    x = [lift_coordinate(i, 4) for i in range(4)]
    pots = [
        one_form(4, {1: x[0], 3: -1.0 * x[2]}),
        one_form(4, {2: x[0], 1: -1.0 * x[3]}),
        one_form(4, {3: x[0], 2: -1.0 * x[1]}),
        None,
    ]
    model = build_hypercomplex(base, pots)
    pts = pts_for(model, 10, 16)
    assert hypercomplex_nijenhuis_residual(model, pts) <= 1e-9


def test_hypercomplex_self_dual_rejected():
    base = flat_base(n=1, torus=True)
    x = [lift_coordinate(i, 4) for i in range(4)]
    bad = one_form(4, {2: x[0], 1: x[3]})  # d = dx13 + dx42 = sigma2, self-dual
    with pytest.raises(ConstructionError):
        build_hypercomplex(base, [bad])


def test_hypercomplex_broken_input_nijenhuis_large():
    base = flat_base(n=1, torus=True)
    x = [lift_coordinate(i, 4) for i in range(4)]
    bad = one_form(4, {2: x[0], 1: x[3]})
    model = build_hypercomplex(base, [bad], validate=False)
    p = ChartPoint(np.array([0.3, -0.2, 0.4, 0.1, 0.25, -0.35, 0.15, 0.45]))
    assert hypercomplex_nijenhuis_residual(model, [p]) > 0.1


def test_upsilon1_closed_mixed_and_abelian():
    base = flat_base(n=1, torus=True)
    mixed = build_hypercomplex(base, [nu_potential_asd(base)])
    x = [lift_coordinate(i, 4) for i in range(4)]
    abelian = build_hypercomplex(
        base,
        [
            one_form(4, {1: x[0], 3: -1.0 * x[2]}),
            one_form(4, {2: x[0], 1: -1.0 * x[3]}),
            one_form(4, {3: x[0], 2: -1.0 * x[1]}),
            None,
        ],
    )
    for model, seed in ((mixed, 17), (abelian, 18)):
        d_ups = model.complex_forms["Upsilon1"].d()
        for p in pts_for(model, 10, seed):
            assert d_ups.max_abs_coeff(p) <= 1e-10


# -- balanced structures ---------------------------------------------------------


def test_balanced_xi_eta_bundle():
    base = flat_base(n=1, torus=True)
    model = build_xi_eta_bundle(base)
    pts = pts_for(model, 10, 19)
    assert balanced_check(model, "omega", 2, pts) <= 1e-10
    d_ups = model.complex_forms["Upsilon"].d()
    for p in pts:
        assert d_ups.max_abs_coeff(p) <= 1e-10


def test_balanced_n8_conformal(n8_flat):
    pts = pts_for(n8_flat, 5, 20)
    assert balanced_check(n8_flat, "omega1_balanced", 3, pts) <= 1e-10
    # the unrescaled form is NOT balanced
    assert balanced_check(n8_flat, "omega1", 3, pts) > 1e-3


def test_balanced_abelian_m8():
    base = flat_base(n=1, torus=True)
    x = [lift_coordinate(i, 4) for i in range(4)]
    model = build_hypercomplex(
        base,
        [
            one_form(4, {1: x[0], 3: -1.0 * x[2]}),
            one_form(4, {2: x[0], 1: -1.0 * x[3]}),
            one_form(4, {3: x[0], 2: -1.0 * x[1]}),
            None,
        ],
    )
    pts = pts_for(model, 5, 21)
    for name in ("omega1", "omega2", "omega3"):
        assert balanced_check(model, name, 3, pts) <= 1e-10


def test_balanced_unknown_form_rejected(n8_flat):
    with pytest.raises(ValueError):
        balanced_check(n8_flat, "nonexistent", 2, [])


# -- Ricci-flat specials ----------------------------------------------------------


def test_calabi_ricci_flat():
    model = ricci_flat_specials("calabi_P")
    pts = [ChartPoint(np.array([t, 0.1, 0.3, -0.2, 0.4, 0.2])) for t in (0.5, 1.0, 2.0)]
    assert einstein_residual(model.metric, 0.0, pts) <= 1e-7


def test_g2_metric_ricci_flat():
    model = ricci_flat_specials("as_G2_L7", b=1.0)
    pts = sample_box(model.box, 4, 22)
    assert einstein_residual(model.metric, 0.0, pts) <= 1e-7


def test_spin7_metric_ricci_flat():
    model = ricci_flat_specials("spin7_N8", b=1.0, c=2.0)
    pts = sample_box(model.box, 3, 23)
    assert einstein_residual(model.metric, 0.0, pts) <= 1e-7


def test_specials_need_positive_parameters():
    with pytest.raises(ConstructionError):
        ricci_flat_specials("as_G2_L7", b=-1.0)
