# eitshape/verify.py
"""
Closed-form checks of the tensor form of shape derivatives.

Everything here works with analytic fields evaluated at quadrature points and
never touches the finite element code.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InvalidParameterError
from .validators import ParameterValidator

logger = logging.getLogger(__name__)

Points = np.ndarray
ScalarFn = Callable[[Points], np.ndarray]
VectorFn = Callable[[Points], np.ndarray]

GAP_TOL = 1e-8


@dataclass(frozen=True)
class ScalarForm:
    """Closed-form scalar with the derivatives the checks need"""
    value: ScalarFn
    grad: VectorFn
    laplacian: Optional[ScalarFn] = None
    grad_laplacian: Optional[VectorFn] = None


@dataclass(frozen=True)
class VectorForm:
    """Closed-form vector field with its Jacobian [.., i, j] = d v_i / d x_j"""
    value: VectorFn
    jacobian: Callable[[Points], np.ndarray]


def constant_scalar(c: float) -> ScalarForm:
    return ScalarForm(
        value=lambda x: np.full(len(x), c),
        grad=lambda x: np.zeros((len(x), 2)),
        laplacian=lambda x: np.zeros(len(x)),
        grad_laplacian=lambda x: np.zeros((len(x), 2)),
    )


def x2y() -> ScalarForm:
    """u = x^2 y"""
    return ScalarForm(
        value=lambda p: p[:, 0] ** 2 * p[:, 1],
        grad=lambda p: np.column_stack([2 * p[:, 0] * p[:, 1], p[:, 0] ** 2]),
        laplacian=lambda p: 2 * p[:, 1],
        grad_laplacian=lambda p: np.column_stack([np.zeros(len(p)), np.full(len(p), 2.0)]),
    )


def sin_cos() -> ScalarForm:
    """p = sin(x) cos(y)"""
    def grad(p):
        return np.column_stack([np.cos(p[:, 0]) * np.cos(p[:, 1]), -np.sin(p[:, 0]) * np.sin(p[:, 1])])
    return ScalarForm(
        value=lambda p: np.sin(p[:, 0]) * np.cos(p[:, 1]),
        grad=grad,
        laplacian=lambda p: -2 * np.sin(p[:, 0]) * np.cos(p[:, 1]),
        grad_laplacian=lambda p: -2 * grad(p),
    )


def exp_sin() -> ScalarForm:
    """g = exp(x) sin(2y)"""
    return ScalarForm(
        value=lambda p: np.exp(p[:, 0]) * np.sin(2 * p[:, 1]),
        grad=lambda p: np.column_stack([np.exp(p[:, 0]) * np.sin(2 * p[:, 1]),
                                        2 * np.exp(p[:, 0]) * np.cos(2 * p[:, 1])]),
    )


def identity_field() -> VectorForm:
    """theta(x) = x"""
    return VectorForm(value=lambda p: p.copy(),
                      jacobian=lambda p: np.broadcast_to(np.eye(2), (len(p), 2, 2)).copy())


def rotation_field(center: Tuple[float, float]) -> VectorForm:
    """theta(x) = R(x - c), tangential to every circle around c"""
    c = np.asarray(center)
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    return VectorForm(value=lambda p: (p - c) @ rot.T,
                      jacobian=lambda p: np.broadcast_to(rot, (len(p), 2, 2)).copy())


def radial_field(center: Tuple[float, float], radius: float) -> VectorForm:
    """theta(x) = (x - c) / r, equal to the outward normal on the circle"""
    c = np.asarray(center)
    return VectorForm(value=lambda p: (p - c) / radius,
                      jacobian=lambda p: np.broadcast_to(np.eye(2) / radius, (len(p), 2, 2)).copy())


def sum_fields(a: VectorForm, b: VectorForm) -> VectorForm:
    return VectorForm(value=lambda p: a.value(p) + b.value(p),
                      jacobian=lambda p: a.jacobian(p) + b.jacobian(p))


def extended_normal(center: Tuple[float, float]) -> VectorForm:
    """n(x) = (x - c) / |x - c| with D n = (I - n n^T) / |x - c|"""
    c = np.asarray(center)

    def value(p):
        d = p - c
        return d / np.linalg.norm(d, axis=1)[:, None]

    def jacobian(p):
        d = p - c
        rho = np.linalg.norm(d, axis=1)
        n = d / rho[:, None]
        return (np.eye(2)[None] - np.einsum("ti,tj->tij", n, n)) / rho[:, None, None]

    return VectorForm(value=value, jacobian=jacobian)


@dataclass(frozen=True)
class Circle:
    """Circle with a composite Gauss rule of `panels` panels"""
    center: Tuple[float, float]
    radius: float
    panels: int = 32
    order: int = 8

    def validate(self):
        ParameterValidator.validate_number(self.radius, "radius", min_val=0.0, strict_min=True)
        if self.panels < 16:
            raise InvalidParameterError(f"At least 16 panels are required, got {self.panels}")

    @property
    def curvature(self) -> float:
        return 1.0 / self.radius

    def boundary_rule(self) -> Tuple[Points, np.ndarray, np.ndarray]:
        """Points, arc-length weights and outward normals"""
        nodes, weights = leggauss(self.order)
        edges = np.linspace(0.0, 2 * np.pi, self.panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        angles = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * weights[None, :]).ravel() * self.radius
        normals = np.column_stack([np.cos(angles), np.sin(angles)])
        points = np.asarray(self.center) + self.radius * normals
        return points, w, normals

    def disk_rule(self, radial: int = 24) -> Tuple[Points, np.ndarray]:
        """Polar tensor rule: Gauss in the radius, panel Gauss in the angle"""
        rn, rw = leggauss(radial)
        rho = 0.5 * self.radius * (rn + 1.0)
        rho_w = 0.5 * self.radius * rw * rho
        _, aw, normals = self.boundary_rule()
        aw = aw / self.radius
        points = (np.asarray(self.center)[None, None, :]
                  + rho[:, None, None] * normals[None, :, :]).reshape(-1, 2)
        weights = (rho_w[:, None] * aw[None, :]).ravel()
        return points, weights

    def perimeter_error(self) -> float:
        _, w, _ = self.boundary_rule()
        return abs(float(w.sum()) - 2 * np.pi * self.radius)


@dataclass
class CheckResult:
    """Outcome of one verification"""
    name: str
    domain_value: float
    boundary_value: float
    gap: float
    tol: float = GAP_TOL

    @property
    def passed(self) -> bool:
        return bool(self.gap <= self.tol)


def tangential_divergence(jac: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """div_G v = tr(Dv) - n . Dv n"""
    return np.trace(jac, axis1=1, axis2=2) - np.einsum("ti,tij,tj->t", normals, jac, normals)


def volume_functional_check(shape: Circle, f: ScalarForm, g: ScalarForm, theta: VectorForm,
                            radial: int = 24, name: str = "volume-functional") -> CheckResult:
    """
    Compare the domain form of the derivative of int_O f + int_dO g with its
    boundary form int_dO (f + d_n g + g H) theta.n.
    """
    shape.validate()
    xq, wq = shape.disk_rule(radial)
    jac = theta.jacobian(xq)
    div = np.trace(jac, axis1=1, axis2=2)
    volume = np.sum(wq * (np.einsum("ti,ti->t", f.grad(xq), theta.value(xq)) + f.value(xq) * div))

    xs, ws, normals = shape.boundary_rule()
    th = theta.value(xs)
    gvals = g.value(xs)
    ggrad = g.grad(xs)
    surface = np.sum(ws * (np.einsum("ti,ti->t", ggrad, th)
                           + gvals * tangential_divergence(theta.jacobian(xs), normals)))
    domain_value = float(volume + surface)

    dn_g = np.einsum("ti,ti->t", ggrad, normals)
    g1 = f.value(xs) + dn_g + gvals * shape.curvature
    boundary_value = float(np.sum(ws * g1 * np.einsum("ti,ti->t", th, normals)))

    result = CheckResult(name, domain_value, boundary_value, abs(domain_value - boundary_value))
    logger.info("%s: domain=%.15e boundary=%.15e gap=%.2e", name, domain_value, boundary_value, result.gap)
    return result


def tangential_green_check(shape: Circle, g: ScalarForm, theta: VectorForm) -> CheckResult:
    """int (grad g . theta + g div_G theta) = int (d_n g + g H) theta.n"""
    return volume_functional_check(shape, constant_scalar(0.0), g, theta, name="tangential-green")


def _central_divergence(tensor: Callable[[Points], np.ndarray], points: Points, step: float,
                        order: int) -> np.ndarray:
    """Row-wise divergence of a 2x2 tensor field by central differences"""
    if order == 2:
        offsets, coeffs = (1, -1), (0.5, -0.5)
    elif order == 4:
        offsets, coeffs = (2, 1, -1, -2), (-1 / 12, 8 / 12, -8 / 12, 1 / 12)
    else:
        raise InvalidParameterError(f"Unsupported difference order {order}")
    div = np.zeros((len(points), 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        for k, c in zip(offsets, coeffs):
            div += c * tensor(points + k * e)[:, :, j] / step
    return div


@dataclass
class EquilibriumResult:
    steps: List[float]
    residuals: List[float]
    orders: List[float]
    band: Tuple[float, float] = (1.8, 2.2)
    zero_tol: float = 1e-12

    @property
    def max_residual(self) -> float:
        return max(self.residuals)

    @property
    def converges(self) -> bool:
        if self.max_residual <= self.zero_tol:
            return True
        return all(self.band[0] <= q <= self.band[1] for q in self.orders)

    @property
    def passed(self) -> bool:
        return self.converges


def elliptic_tensors(u: ScalarForm, p: ScalarForm, negative_control: bool = False):
    """
    Tensors of J = int (u - u_d)^2 subject to -Lap u + u = f, with f and u_d
    chosen so that state and adjoint equations hold strongly.

    Returns:
        (S1, S0) as callables of the evaluation points
    """
    def f(x):
        return -u.laplacian(x) + u.value(x)

    def grad_f(x):
        return -u.grad_laplacian(x) + u.grad(x)

    if negative_control:
        def u_d(x):
            return u.value(x) + 1.0

        def grad_u_d(x):
            return u.grad(x)
    else:
        def u_d(x):
            return u.value(x) + 0.5 * (-p.laplacian(x) + p.value(x))

        def grad_u_d(x):
            return u.grad(x) + 0.5 * (-p.grad_laplacian(x) + p.grad(x))

    def S1(x):
        gu = u.grad(x)
        gp = p.grad(x)
        uv = u.value(x)
        pv = p.value(x)
        scalar = np.einsum("ti,ti->t", gu, gp) + uv * pv - f(x) * pv + (uv - u_d(x)) ** 2
        outer = np.einsum("ti,tj->tij", gu, gp) + np.einsum("ti,tj->tij", gp, gu)
        return -outer + scalar[:, None, None] * np.eye(2)[None]

    def S0(x):
        return -2.0 * (u.value(x) - u_d(x))[:, None] * grad_u_d(x) - p.value(x)[:, None] * grad_f(x)

    return S1, S0


def equilibrium_residual_check(u: ScalarForm, p: ScalarForm, points: Points,
                               steps: Sequence[float] = (1e-2, 5e-3), fd_order: int = 2,
                               negative_control: bool = False) -> EquilibriumResult:
    """Max norm of -div S1 + S0 with finite-difference divergences at each step"""
    S1, S0 = elliptic_tensors(u, p, negative_control)
    residuals = []
    for step in steps:
        r = -_central_divergence(S1, points, step, fd_order) + S0(points)
        residuals.append(float(np.max(np.linalg.norm(r, axis=1))))
    orders = []
    for k in range(1, len(steps)):
        if residuals[k] > 0 and residuals[k - 1] > 0:
            orders.append(float(np.log(residuals[k - 1] / residuals[k]) / np.log(steps[k - 1] / steps[k])))
        else:
            orders.append(float("nan"))
    result = EquilibriumResult(list(steps), residuals, orders)
    logger.info("equilibrium residuals %s orders %s", residuals, orders)
    return result


def sample_grid(lo: float = 0.2, hi: float = 0.8, count: int = 7) -> Points:
    s = np.linspace(lo, hi, count)
    xx, yy = np.meshgrid(s, s)
    return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass
class CurvatureReductionResult(CheckResult):
    projector_residual: float = 0.0
    curvature_gap: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.gap <= self.tol and self.projector_residual <= 1e-12
                    and self.curvature_gap <= self.tol)


def curvature_reduction_check(shape: Circle, alpha: ScalarForm, theta: VectorForm,
                              fd_step: float = 1e-5) -> CurvatureReductionResult:
    """
    With boundary tensor alpha (I - n n^T), the general boundary density
    S1 . D_G n - div_G(S1^T n) + H (S1^T n . n) must reduce to alpha H.
    """
    shape.validate()
    normal = extended_normal(shape.center)
    xs, ws, normals = shape.boundary_rule()

    def boundary_tensor(x):
        n = normal.value(x)
        return alpha.value(x)[:, None, None] * (np.eye(2)[None] - np.einsum("ti,tj->tij", n, n))

    def transposed_normal(x):
        return np.einsum("tji,tj->ti", boundary_tensor(x), normal.value(x))

    tn = transposed_normal(xs)
    projector_residual = float(np.max(np.linalg.norm(tn, axis=1)))

    # Jacobian of S1^T n by central differences; the field vanishes identically
    jac = np.zeros((len(xs), 2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = fd_step
        jac[:, :, j] = (transposed_normal(xs + e) - transposed_normal(xs - e)) / (2 * fd_step)
    div_tn = tangential_divergence(jac, normals)

    Dn = normal.jacobian(xs)
    D_gamma_n = Dn - np.einsum("tij,tj,tk->tik", Dn, normals, normals)
    contraction = np.einsum("tij,tij->t", boundary_tensor(xs), D_gamma_n)

    full = contraction - div_tn + shape.curvature * np.einsum("ti,ti->t", tn, normals)
    simplified = alpha.value(xs) * shape.curvature
    curvature_gap = float(np.max(np.abs(contraction - simplified)))

    theta_n = np.einsum("ti,ti->t", theta.value(xs), normals)
    full_value = float(np.sum(ws * full * theta_n))
    simple_value = float(np.sum(ws * simplified * theta_n))
    result = CurvatureReductionResult("curvature-reduction", full_value, simple_value,
                                      abs(full_value - simple_value),
                                      projector_residual=projector_residual, curvature_gap=curvature_gap)
    logger.info("curvature reduction: full=%.15e simplified=%.15e gap=%.2e |S1^T n|=%.2e",
                full_value, simple_value, result.gap, projector_residual)
    return result


def smooth_alpha() -> ScalarForm:
    """alpha = 1 + x y / 2"""
    return ScalarForm(value=lambda p: 1.0 + 0.5 * p[:, 0] * p[:, 1],
                      grad=lambda p: np.column_stack([0.5 * p[:, 1], 0.5 * p[:, 0]]))


def run_all(panels: int = 32, radial: int = 24, negative_control: bool = False) -> Dict[str, object]:
    """Default verification suite used by the CLI"""
    center = (0.5, 0.5)
    circle = Circle(center, 0.3, panels=panels)
    results: Dict[str, object] = {
        "divergence": volume_functional_check(circle, constant_scalar(1.0), constant_scalar(0.0),
                                              identity_field(), radial=radial, name="divergence"),
        "tangential-field": volume_functional_check(circle, exp_sin(), constant_scalar(0.0),
                                                    rotation_field(center), radial=radial,
                                                    name="tangential-field"),
        "tangential-green": tangential_green_check(
            circle, exp_sin(), sum_fields(radial_field(center, 0.3), rotation_field(center))),
        "curvature-reduction": curvature_reduction_check(circle, smooth_alpha(), radial_field(center, 0.3)),
        "equilibrium": equilibrium_residual_check(x2y(), sin_cos(), sample_grid(),
                                                  negative_control=negative_control),
    }
    return results
