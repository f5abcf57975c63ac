# tests/test_verify.py
import numpy as np
import pytest

from eitshape import verify
from eitshape.errors import InvalidParameterError
from eitshape.verify import (
    Circle,
    constant_scalar,
    curvature_reduction_check,
    equilibrium_residual_check,
    exp_sin,
    identity_field,
    radial_field,
    rotation_field,
    sample_grid,
    sin_cos,
    smooth_alpha,
    sum_fields,
    tangential_green_check,
    volume_functional_check,
    x2y,
)

CENTER = (0.5, 0.5)


@pytest.mark.parametrize("panels", [16, 32, 64])
def test_circle_quadrature(panels):
    """Test the panel rule integrates the perimeter and the disk area"""
    circle = Circle(CENTER, 0.3, panels=panels)
    assert circle.perimeter_error() <= 1e-12
    _, weights = circle.disk_rule()
    assert weights.sum() == pytest.approx(np.pi * 0.09, rel=1e-13)


def test_circle_needs_enough_panels():
    """Test coarse rules are rejected"""
    with pytest.raises(InvalidParameterError):
        Circle(CENTER, 0.3, panels=8).validate()
    with pytest.raises(InvalidParameterError):
        Circle(CENTER, -0.3).validate()


def test_divergence_check():
    """Test int div(x) over the disk against 2 pi r^2"""
    result = volume_functional_check(Circle(CENTER, 0.3), constant_scalar(1.0), constant_scalar(0.0),
                                     identity_field(), name="divergence")
    assert result.passed
    assert result.domain_value == pytest.approx(2 * np.pi * 0.09, rel=1e-13)
    assert result.boundary_value == pytest.approx(2 * np.pi * 0.09, rel=1e-13)


def test_tangential_field_has_no_boundary_term():
    """Test a field tangent to the circle gives a vanishing boundary form"""
    result = volume_functional_check(Circle(CENTER, 0.3), exp_sin(), constant_scalar(0.0),
                                     rotation_field(CENTER))
    assert result.passed
    assert abs(result.boundary_value) <= 1e-12
    assert abs(result.domain_value) <= 1e-8


@pytest.mark.parametrize("panels", [16, 64])
def test_tangential_green(panels):
    """Test the tangential Green formula with radial and rotational components"""
    theta = sum_fields(radial_field(CENTER, 0.3), rotation_field(CENTER))
    result = tangential_green_check(Circle(CENTER, 0.3, panels=panels), exp_sin(), theta)
    assert result.passed
    assert abs(result.domain_value) > 1e-3


def test_boundary_and_volume_terms_together():
    """Test a functional with both a volume and a boundary part"""
    theta = sum_fields(radial_field(CENTER, 0.3), rotation_field(CENTER))
    result = volume_functional_check(Circle(CENTER, 0.3), x2y(), exp_sin(), theta)
    assert result.gap <= 1e-8


def test_curvature_reduction():
    """Test the boundary density reduces to alpha times the curvature"""
    result = curvature_reduction_check(Circle(CENTER, 0.3), constant_scalar(1.0),
                                            radial_field(CENTER, 0.3))
    assert result.passed
    assert result.projector_residual <= 1e-12
    assert result.boundary_value == pytest.approx(2 * np.pi, rel=1e-12)

    smooth = curvature_reduction_check(Circle(CENTER, 0.3), smooth_alpha(), radial_field(CENTER, 0.3))
    assert smooth.passed


def test_equilibrium_of_trivial_fields():
    """Test zero state and adjoint give a zero residual"""
    result = equilibrium_residual_check(constant_scalar(0.0), constant_scalar(0.0), sample_grid())
    assert result.max_residual == 0.0
    assert result.passed


def test_equilibrium_converges_at_second_order():
    """Test the residual of the closed-form tensors decays with the stencil width"""
    result = equilibrium_residual_check(x2y(), sin_cos(), sample_grid())
    assert result.passed
    assert all(1.8 <= q <= 2.2 for q in result.orders)
    assert result.residuals[1] < result.residuals[0]


def test_equilibrium_fourth_order_stencil():
    """Test the fourth-order stencil drives the residual far below the second-order one"""
    second = equilibrium_residual_check(x2y(), sin_cos(), sample_grid())
    fourth = equilibrium_residual_check(x2y(), sin_cos(), sample_grid(), fd_order=4)
    assert fourth.residuals[-1] < 0.1 * second.residuals[-1]

    with pytest.raises(InvalidParameterError):
        equilibrium_residual_check(x2y(), sin_cos(), sample_grid(), fd_order=3)


def test_equilibrium_negative_control_fails():
    """Test an inconsistent data term breaks equilibrium"""
    result = equilibrium_residual_check(x2y(), sin_cos(), sample_grid(), negative_control=True)
    assert not result.passed
    assert result.max_residual > 1e-3


def test_run_all():
    """Test the default suite passes and the negative control is caught"""
    results = verify.run_all()
    assert set(results) == {"divergence", "tangential-field", "tangential-green", "curvature-reduction", "equilibrium"}
    assert all(r.passed for r in results.values())

    control = verify.run_all(negative_control=True)
    assert not control["equilibrium"].passed
    assert control["divergence"].passed
