import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mongeplate.errors import FeasibilityViolated, NonConstantK, SignMismatch
from mongeplate.functional import (
    ConstraintData,
    affine_part,
    analytic_minimizer,
    constraint,
    constraint_jacobian_apply,
    constraint_jacobian_transpose_apply,
    energy,
    energy_gradient,
    energy_identity_laplacian,
    energy_identity_tracefree,
    normalize,
)
from mongeplate.grid import (
    GridDomain,
    ScalarField,
    det2,
    divdiv_adjoint,
    frobenius,
    hessian,
    integrate,
    laplacian,
    tracefree,
)
from mongeplate.solver import restore_feasibility
from mongeplate.verify import identity_errors

from helpers import half_norm, random_smooth


def unit_random(dom, rng):
    f = ScalarField(dom, rng.standard_normal(dom.shape))
    return f * (1.0 / f.norm())


# -- ConstraintData -----------------------------------------------------------------


def test_constraint_data_caches_minimum(rect):
    data = ConstraintData.polynomial(rect, [[0, 0, 1.0], [1, 0, 0.5], [0, 2, -0.1]])
    assert data.k_min == pytest.approx(data.k.interior.min())
    assert not data.is_constant
    X, Y = rect.coordinates()
    assert np.allclose(data.k.values, 1.0 + 0.5 * X - 0.1 * Y**2)


def test_constant_data(unit17):
    data = ConstraintData.constant_k(unit17, 4.0)
    assert data.is_constant and data.constant == 4.0 and data.k_min == 4.0


# -- energy -----------------------------------------------------------------------------


@pytest.mark.parametrize("func", [lambda x, y: 0.5 * (x**2 + y**2), lambda x, y: 0.5 * (x**2 - y**2)])
def test_energy_of_closed_forms_is_twice_interior_area(func):
    for n in (9, 17, 33):
        dom = GridDomain.square(n)
        assert energy(dom.sample(func)) == pytest.approx(2.0 * dom.interior_area, rel=1e-13)


def test_energy_of_closed_form_tends_to_two():
    gaps = [abs(energy(half_norm(GridDomain.square(n))) - 2.0) for n in (17, 33, 65, 129)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_energy_of_affine_is_zero(rect):
    assert energy(rect.sample(lambda x, y: 1 + 2 * x - 3 * y)) == pytest.approx(0.0, abs=1e-20)


def test_gradient_of_zero_is_zero(rect):
    assert not energy_gradient(ScalarField.zeros(rect)).values.any()


@pytest.mark.parametrize("t", [0.1, 1.0])
def test_energy_quadratic_expansion(rng, unit17, t):
    for _ in range(5):
        v = unit_random(unit17, rng)
        h = unit_random(unit17, rng)
        lhs = energy(v + h * t)
        rhs = energy(v) + t * energy_gradient(v).dot(h) + t**2 * energy(h)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_energy_gradient_central_difference(rng, unit17):
    eps = 1e-5
    for _ in range(5):
        v = unit_random(unit17, rng)
        h = unit_random(unit17, rng)
        fd = (energy(v + h * eps) - energy(v - h * eps)) / (2 * eps)
        assert energy_gradient(v).dot(h) == pytest.approx(fd, rel=1e-6)


def test_energy_gradient_is_twice_adjoint(rect, rng):
    v = ScalarField(rect, rng.standard_normal(rect.shape))
    assert np.array_equal(energy_gradient(v).values, (divdiv_adjoint(hessian(v)) * 2.0).values)


# -- constraint and its linearisation --------------------------------------------------------


def test_constraint_examples(unit17):
    one = ConstraintData.constant_k(unit17, 1.0)
    assert constraint(half_norm(unit17), one).max_abs() < 1e-13
    minus = ConstraintData.constant_k(unit17, -1.0)
    assert constraint(unit17.sample(lambda x, y: 0.5 * (x**2 - y**2)), minus).max_abs() < 1e-12
    g = constraint(ScalarField.zeros(unit17), one)
    assert np.all(g.interior == -1.0)
    assert not g.values[unit17.boundary_mask()].any()


def test_jacobian_at_half_norm_is_laplacian(unit17, rng):
    v = half_norm(unit17)
    h = ScalarField(unit17, rng.standard_normal(unit17.shape))
    assert np.allclose(constraint_jacobian_apply(v, h).values, laplacian(h).values, rtol=1e-12, atol=1e-9)
    assert constraint_jacobian_apply(v, unit17.sample(lambda x, y: x * y)).max_abs() < 1e-11
    assert np.allclose(constraint_jacobian_apply(v, v).interior, 2.0, rtol=1e-13)


def _expansion_defect(v, h, data):
    lhs = constraint(v + h, data).interior
    rhs = constraint(v, data).interior + constraint_jacobian_apply(v, h).interior + det2(hessian(h)).interior
    Hv, Hh = hessian(v), hessian(h)
    scale = np.abs(data.k.interior) + frobenius(Hv, Hv).interior + frobenius(Hh, Hh).interior
    return np.max(np.abs(lhs - rhs) / scale)


def test_constraint_exact_quadratic_expansion(rng, unit17):
    data = ConstraintData.polynomial(unit17, [[0, 0, 1.0], [1, 1, 2.0]])
    for _ in range(20):
        v = ScalarField(unit17, rng.standard_normal(unit17.shape))
        h = ScalarField(unit17, rng.standard_normal(unit17.shape))
        assert _expansion_defect(v, h, data) <= 1e-12


def test_transpose_is_adjoint(rng, rect):
    for _ in range(10):
        v = ScalarField(rect, rng.standard_normal(rect.shape))
        h = ScalarField(rect, rng.standard_normal(rect.shape))
        mu = ScalarField.from_interior(rect, rng.standard_normal(rect.interior_shape))
        Jh = constraint_jacobian_apply(v, h)
        lhs = integrate(ScalarField(rect, mu.values * Jh.values))
        rhs = constraint_jacobian_transpose_apply(v, mu).dot(h)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * abs(lhs))


def test_transpose_of_zero_multiplier(rect, rng):
    v = ScalarField(rect, rng.standard_normal(rect.shape))
    assert not constraint_jacobian_transpose_apply(v, ScalarField.zeros(rect)).values.any()


def test_transpose_at_half_norm_with_unit_multiplier():
    dom = GridDomain.square(9)
    v = half_norm(dom)
    mu = ScalarField.from_interior(dom, np.ones(dom.interior_shape))
    lhs = constraint_jacobian_transpose_apply(v, mu).values
    assert np.allclose(lhs, divdiv_adjoint(hessian(v)).values, atol=1e-12)
    assert np.allclose(lhs, 0.5 * energy_gradient(v).values, atol=1e-12)


# -- identities ------------------------------------------------------------------------------------


@pytest.mark.parametrize("k,func", [(1.0, lambda x, y: 0.5 * (x**2 + y**2)), (-1.0, lambda x, y: 0.5 * (x**2 - y**2))])
def test_energy_identities_on_closed_forms(unit17, k, func):
    data = ConstraintData.constant_k(unit17, k)
    v = unit17.sample(func)
    E = energy(v)
    assert energy_identity_laplacian(v, data) == pytest.approx(E, rel=1e-10)
    assert energy_identity_tracefree(v, data) == pytest.approx(E, rel=1e-10)


def test_energy_identities_on_restored_field(unit17, rng):
    data = ConstraintData.polynomial(unit17, [[0, 0, 1.0], [1, 0, 0.3]])
    v = restore_feasibility(half_norm(unit17) + random_smooth(unit17, rng), data)
    E = energy(v)
    assert energy_identity_laplacian(v, data) == pytest.approx(E, rel=1e-8)
    assert energy_identity_tracefree(v, data) == pytest.approx(E, rel=1e-8)


def test_identities_refuse_infeasible_fields(unit17):
    data = ConstraintData.constant_k(unit17, 1.0)
    v = half_norm(unit17, 0.6)
    with pytest.raises(FeasibilityViolated):
        energy_identity_laplacian(v, data)
    with pytest.raises(FeasibilityViolated):
        energy_identity_tracefree(v, data, tol=1e-3)
    # a loose tolerance is honoured
    energy_identity_laplacian(v, data, tol=1.0)


def test_pointwise_identity_diag_1_2():
    e1, e2 = identity_errors(np.array([1.0]), np.array([0.0]), np.array([2.0]))
    assert 1 + 4 == 9 - 2 * 2
    assert e1[0] == 0.0 and e2[0] == 0.0


@given(a=st.floats(-1e3, 1e3), b=st.floats(-1e3, 1e3), c=st.floats(-1e3, 1e3))
@settings(max_examples=200)
def test_pointwise_matrix_identities(a, b, c):
    e1, e2 = identity_errors(np.array([a]), np.array([b]), np.array([c]))
    scale = max(1.0, a * a + 2 * b * b + c * c)
    assert abs(e1[0]) <= 1e-13 * scale
    assert abs(e2[0]) <= 1e-13 * scale


# -- closed forms ------------------------------------------------------------------------------------


def test_analytic_minimizer_examples(rect):
    X, Y = rect.coordinates()
    v = analytic_minimizer(ConstraintData.constant_k(rect, 1.0))
    assert np.allclose(v.values, 0.5 * (X**2 + Y**2), rtol=1e-15)
    v = analytic_minimizer(ConstraintData.constant_k(rect, -1.0))
    assert np.allclose(v.values, 0.5 * (X**2 - Y**2), rtol=1e-15)
    assert not analytic_minimizer(ConstraintData.constant_k(rect, 0.0)).values.any()
    v = analytic_minimizer(4.0, domain=rect)
    assert np.allclose(v.values, X**2 + Y**2)


def test_analytic_minimizer_errors(rect):
    with pytest.raises(NonConstantK):
        analytic_minimizer(ConstraintData.polynomial(rect, [[0, 0, 1.0], [1, 0, 1.0]]))
    with pytest.raises(SignMismatch):
        analytic_minimizer(ConstraintData.constant_k(rect, 1.0), "hyperbolic")
    with pytest.raises(SignMismatch):
        analytic_minimizer(ConstraintData.constant_k(rect, -2.0), "elliptic")


# -- normalisation ----------------------------------------------------------------------------------


def test_normalize_kills_affine(rect):
    assert normalize(rect.sample(lambda x, y: 3 + 2 * x - 5 * y)).max_abs() < 1e-13


def test_normalize_is_idempotent(rect, rng):
    v = ScalarField(rect, rng.standard_normal(rect.shape))
    once = normalize(v)
    assert np.allclose(normalize(once).values, once.values, rtol=0, atol=1e-13)


def test_normalized_half_norm_has_zero_mean_and_mean_gradient(unit17):
    w = normalize(half_norm(unit17))
    a, bx, by = affine_part(w)
    assert abs(np.mean(w.values)) < 1e-13
    assert abs(bx) < 1e-13 and abs(by) < 1e-13


def test_normalization_preserves_energy(rect, rng):
    v = ScalarField(rect, rng.standard_normal(rect.shape)) + rect.sample(lambda x, y: 40 + 10 * x + 7 * y)
    assert energy(normalize(v)) == pytest.approx(energy(v), rel=1e-13)


# -- energy bounds on the constraint set ---------------------------------------------------------------


def test_feasible_lower_bound(rng):
    dom = GridDomain.square(17)
    data = ConstraintData.polynomial(dom, [[0, 0, 1.0], [1, 0, 0.5], [0, 1, 0.25]])
    tau = 1e-9
    for _ in range(5):
        v = restore_feasibility(half_norm(dom) + random_smooth(dom, rng, amplitude=0.05), data)
        assert constraint(v, data).max_abs() <= tau
        assert energy(v) >= 2 * integrate(data.k) - 2 * tau * dom.interior_area


def test_energy_excess_is_twice_tracefree_norm(rng):
    dom = GridDomain.square(17)
    data = ConstraintData.constant_k(dom, 1.0)
    best = energy(analytic_minimizer(data))
    assert best == pytest.approx(2 * integrate(data.k), rel=1e-13)
    for _ in range(5):
        v = restore_feasibility(half_norm(dom) + random_smooth(dom, rng, amplitude=0.05), data)
        A0 = tracefree(hessian(v))
        excess = energy(v) - 2 * integrate(data.k)
        assert excess == pytest.approx(2 * integrate(frobenius(A0, A0)), rel=1e-6, abs=1e-12)
        assert np.abs(A0.a11).max() > 1e-3
        assert energy(v) > best
