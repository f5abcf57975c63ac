# eitshape/levelset.py
"""
Implicit interface representation.

The inclusion is the negative set of a nodal level-set function phi. Shapes
are initialized as signed distance functions and transported with a Local
Lax-Friedrichs discretization of phi_t + theta . grad(phi) = 0 on the node grid.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import Config
from .errors import InvalidShapeError
from .mesh import StructuredMesh
from .validators import ParameterValidator

logger = logging.getLogger(__name__)

SIGMA_STRATEGIES = ("vertex-average", "centroid", "area-fraction")

ELLIPSE_MAX_ITER = 50
ELLIPSE_TOL = 1e-10


@dataclass(frozen=True)
class Ball:
    """Disk primitive"""
    center: Tuple[float, float]
    radius: float

    def validate(self):
        if not self.radius > 0:
            raise InvalidShapeError(f"Ball radius must be positive, got {self.radius}")
        cx, cy = self.center
        if cx - self.radius < 0 or cx + self.radius > 1 or cy - self.radius < 0 or cy + self.radius > 1:
            raise InvalidShapeError(f"Ball {self} does not lie inside the unit square")

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - np.asarray(self.center), axis=1) - self.radius


@dataclass(frozen=True)
class Ellipse:
    """Rotated ellipse primitive; angle in radians, counterclockwise"""
    center: Tuple[float, float]
    semi_axes: Tuple[float, float]
    angle: float = 0.0

    def validate(self):
        a, b = self.semi_axes
        if not (a > 0 and b > 0):
            raise InvalidShapeError(f"Ellipse semi-axes must be positive, got {self.semi_axes}")
        c, s = np.cos(self.angle), np.sin(self.angle)
        # half-widths of the bounding box of the rotated ellipse
        wx = np.hypot(a * c, b * s)
        wy = np.hypot(a * s, b * c)
        cx, cy = self.center
        if cx - wx < 0 or cx + wx > 1 or cy - wy < 0 or cy + wy > 1:
            raise InvalidShapeError(f"Ellipse {self} does not lie inside the unit square")

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        rel = points - np.asarray(self.center)
        local = np.column_stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1]])
        a, b = self.semi_axes
        y0 = np.abs(local[:, 0])
        y1 = np.abs(local[:, 1])
        if a < b:
            a, b = b, a
            y0, y1 = y1, y0
        dist = _ellipse_distance(a, b, y0, y1)
        inside = (y0 / a) ** 2 + (y1 / b) ** 2 < 1.0
        return np.where(inside, -dist, dist)


Primitive = Union[Ball, Ellipse]


def _ellipse_distance(e0: float, e1: float, y0: np.ndarray, y1: np.ndarray) -> np.ndarray:
    """
    Distance from first-quadrant points to the ellipse with semi-axes e0 >= e1.

    With s = t + e1^2 the closest point is x0 = e0^2 y0 / (s + e0^2 - e1^2),
    x1 = e1^2 y1 / s, where s is the root of a convex decreasing function on
    (0, inf). Newton runs from the left end of the bracket [e1 y1, |(e0 y0, e1 y1)|]
    and a geometric probe shrinks the bracket every iteration, so points close
    to the major axis do not crawl in from the pole. Points that miss the
    tolerance fall back to the scaled algebraic distance.
    """
    dist = np.empty_like(y0)

    on_axis0 = y1 == 0.0
    on_axis1 = (y0 == 0.0) & ~on_axis0
    general = ~(on_axis0 | on_axis1)

    # closest point on the minor axis
    dist[on_axis1] = np.abs(y1[on_axis1] - e1)

    # major axis: the closest point leaves the axis inside the evolute cusp
    yy = y0[on_axis0]
    cusp = (e0 * e0 - e1 * e1) / e0
    near = yy < cusp
    gap = max(e0 * e0 - e1 * e1, np.finfo(float).tiny)
    x0 = np.where(near, e0 * e0 * yy / gap, e0)
    x1 = np.where(near, e1 * np.sqrt(np.clip(1.0 - (x0 / e0) ** 2, 0.0, None)), 0.0)
    dist[on_axis0] = np.hypot(x0 - yy, x1)

    if np.any(general):
        z0 = y0[general]
        z1 = y1[general]
        d = e0 * e0 - e1 * e1
        a0 = e0 * z0
        a1 = e1 * z1

        def residual(s):
            return (a0 / (s + d)) ** 2 + (a1 / s) ** 2 - 1.0

        lo = a1.copy()
        hi = np.hypot(a0, a1)
        s = lo.copy()
        converged = np.zeros(z0.shape, dtype=bool)
        for _ in range(ELLIPSE_MAX_ITER):
            mid = np.sqrt(lo * hi)
            below = residual(mid) > 0.0
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            s_start = np.where(converged, s, np.maximum(s, lo))

            r0 = a0 / (s_start + d)
            r1 = a1 / s_start
            F = r0 * r0 + r1 * r1 - 1.0
            dF = -2.0 * (r0 * r0 / (s_start + d) + r1 * r1 / s_start)
            s_new = np.minimum(s_start - F / dF, hi)
            done = np.abs(s_new - s_start) <= ELLIPSE_TOL * s_new
            s = np.where(converged, s, s_new)
            lo = np.maximum(lo, s)
            converged |= done
            if np.all(converged):
                break
        p0 = e0 * e0 * z0 / (s + d)
        p1 = e1 * e1 * z1 / s
        exact = np.hypot(p0 - z0, p1 - z1)
        if not np.all(converged):
            logger.warning("Ellipse projection did not converge for %d points; using algebraic distance",
                           int(np.sum(~converged)))
            algebraic = (np.hypot(z0 / e0, z1 / e1) - 1.0) * e1
            exact = np.where(converged, exact, np.abs(algebraic))
        dist[general] = exact
    return dist


@dataclass(frozen=True)
class ShapeSpec:
    """Union of ball and ellipse primitives"""
    primitives: Tuple[Primitive, ...] = field(default_factory=tuple)

    def validate(self):
        if not self.primitives:
            raise InvalidShapeError("A shape needs at least one primitive")
        for primitive in self.primitives:
            primitive.validate()

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.min([p.signed_distance(points) for p in self.primitives], axis=0)

    @classmethod
    def from_dicts(cls, entries: Sequence[Mapping[str, Any]]) -> "ShapeSpec":
        """Build from config tables such as {kind='ball', center=[x, y], radius=r}"""
        primitives: List[Primitive] = []
        for entry in entries:
            kind = entry.get("kind", "ball")
            try:
                if kind == "ball":
                    primitives.append(Ball(tuple(entry["center"]), float(entry["radius"])))
                elif kind == "ellipse":
                    primitives.append(Ellipse(tuple(entry["center"]), tuple(entry["semi_axes"]),
                                              float(entry.get("angle", 0.0))))
                else:
                    raise InvalidShapeError(f"Unknown shape kind: {kind}")
            except (KeyError, TypeError, ValueError) as e:
                raise InvalidShapeError(f"Malformed shape entry {dict(entry)}: {e}")
        return cls(tuple(primitives))

    def to_dicts(self) -> List[Dict[str, Any]]:
        out: List[Dict[str, Any]] = []
        for p in self.primitives:
            if isinstance(p, Ball):
                out.append({"kind": "ball", "center": list(p.center), "radius": p.radius})
            else:
                out.append({"kind": "ellipse", "center": list(p.center),
                            "semi_axes": list(p.semi_axes), "angle": p.angle})
        return out


def init_signed_distance(mesh: StructuredMesh, shapes: ShapeSpec) -> np.ndarray:
    """Signed distance to the union of the primitives, negative inside"""
    shapes.validate()
    phi = shapes.signed_distance(mesh.nodes)
    if np.all(phi < 0) or np.all(phi >= 0):
        logger.warning("Initial level set has no interface on this mesh")
    return phi


def negative_fraction(mesh: StructuredMesh, phi: np.ndarray) -> np.ndarray:
    """Exact area fraction of each triangle where the P1 interpolant of phi is negative"""
    v = phi[mesh.triangles]
    neg = v < 0
    count = neg.sum(axis=1)
    frac = np.where(count == 3, 1.0, 0.0)

    # one vertex on the other side: a corner sub-triangle with area ratio a^2/((a-b)(a-c))
    lone = (count == 1) | (count == 2)
    if np.any(lone):
        vl = v[lone]
        odd_is_neg = count[lone] == 1
        odd_mask = np.where(odd_is_neg[:, None], vl < 0, vl >= 0)
        odd_idx = np.argmax(odd_mask, axis=1)
        rows = np.arange(vl.shape[0])
        a = vl[rows, odd_idx]
        b = vl[rows, (odd_idx + 1) % 3]
        c = vl[rows, (odd_idx + 2) % 3]
        corner = a * a / ((a - b) * (a - c))
        frac[lone] = np.where(odd_is_neg, corner, 1.0 - corner)
    return frac


def sigma_from_levelset(mesh: StructuredMesh, phi: np.ndarray, sigma_plus: float, sigma_minus: float,
                        strategy: str = "vertex-average") -> np.ndarray:
    """
    Piecewise-constant conductivity from the sign of phi.

    'vertex-average' (default) and 'centroid' coincide for P1 fields: sigma_plus
    where the mean of the three vertex values is negative. 'area-fraction'
    blends the two values by the exact negative area fraction.
    """
    ParameterValidator.validate_number(sigma_plus, "sigma_plus", min_val=0.0, strict_min=True)
    ParameterValidator.validate_number(sigma_minus, "sigma_minus", min_val=0.0, strict_min=True)
    ParameterValidator.validate_choice(strategy, "sigma strategy", SIGMA_STRATEGIES)

    if strategy == "area-fraction":
        frac = negative_fraction(mesh, phi)
        return frac * sigma_plus + (1.0 - frac) * sigma_minus
    inside = mesh.vertex_average(phi) < 0
    return np.where(inside, sigma_plus, sigma_minus)


def llf_step(mesh: StructuredMesh, phi: np.ndarray, theta: np.ndarray, dt: float) -> np.ndarray:
    """
    One forward-Euler step with the Local Lax-Friedrichs Hamiltonian.

    Boundary nodes replace the missing one-sided difference with the one that
    exists, which switches off the dissipation in that direction.
    """
    h = mesh.h
    P = mesh.to_grid(phi)
    tx = mesh.to_grid(theta[:, 0])
    ty = mesh.to_grid(theta[:, 1])

    dx = np.diff(P, axis=1) / h
    dy = np.diff(P, axis=0) / h
    p_minus = np.concatenate([dx[:, :1], dx], axis=1)
    p_plus = np.concatenate([dx, dx[:, -1:]], axis=1)
    q_minus = np.concatenate([dy[:1, :], dy], axis=0)
    q_plus = np.concatenate([dy, dy[-1:, :]], axis=0)

    hamiltonian = (tx * 0.5 * (p_minus + p_plus) + ty * 0.5 * (q_minus + q_plus)
                   - 0.5 * np.abs(tx) * (p_plus - p_minus)
                   - 0.5 * np.abs(ty) * (q_plus - q_minus))
    return (P - dt * hamiltonian).ravel()


def stable_time_step(mesh: StructuredMesh, theta: np.ndarray, cfl: Optional[float] = None) -> float:
    cfl = Config.CFL_NUMBER if cfl is None else cfl
    speed = float(np.max(np.linalg.norm(theta, axis=1))) if theta.size else 0.0
    return cfl * mesh.h / max(speed, Config.VELOCITY_EPS)


def advect(mesh: StructuredMesh, phi: np.ndarray, theta: np.ndarray, total_time: float,
           cfl: Optional[float] = None) -> np.ndarray:
    """Transport phi by theta up to total_time; the last step is truncated to land on it"""
    ParameterValidator.validate_number(total_time, "total_time", min_val=0.0)
    if total_time == 0.0:
        return phi.copy()

    dt = stable_time_step(mesh, theta, cfl)
    full_steps = int(np.floor(total_time / dt))
    remainder = total_time - full_steps * dt

    out = phi
    for _ in range(full_steps):
        out = llf_step(mesh, out, theta, dt)
    if remainder > 1e-15 * total_time:
        out = llf_step(mesh, out, theta, remainder)
    return out if out is not phi else phi.copy()


def gradient_norm_deviation(mesh: StructuredMesh, phi: np.ndarray) -> float:
    """Median over interior nodes of | |grad phi| - 1 | with central differences"""
    P = mesh.to_grid(phi)
    if mesh.n < 2:
        return float("nan")
    gx = (P[1:-1, 2:] - P[1:-1, :-2]) / (2.0 * mesh.h)
    gy = (P[2:, 1:-1] - P[:-2, 1:-1]) / (2.0 * mesh.h)
    return float(np.median(np.abs(np.hypot(gx, gy) - 1.0)))


def _negative_region_moments(mesh: StructuredMesh, phi: np.ndarray) -> Tuple[float, np.ndarray]:
    """Area and first moment of the negative region of the P1 interpolant"""
    pts = mesh.nodes[mesh.triangles]
    v = phi[mesh.triangles]
    areas = mesh.areas
    centroids = pts.mean(axis=1)
    neg = v < 0
    count = neg.sum(axis=1)

    area = float(np.sum(areas[count == 3]))
    moment = np.sum(areas[count == 3, None] * centroids[count == 3], axis=0)

    for odd_negative in (True, False):
        sel = count == (1 if odd_negative else 2)
        if not np.any(sel):
            continue
        vs = v[sel]
        ps = pts[sel]
        mask = vs < 0 if odd_negative else vs >= 0
        idx = np.argmax(mask, axis=1)
        rows = np.arange(vs.shape[0])
        i1 = (idx + 1) % 3
        i2 = (idx + 2) % 3
        a, b, c = vs[rows, idx], vs[rows, i1], vs[rows, i2]
        pa, pb, pc = ps[rows, idx], ps[rows, i1], ps[rows, i2]
        sab = (a / (a - b))[:, None]
        sac = (a / (a - c))[:, None]
        qb = pa + sab * (pb - pa)
        qc = pa + sac * (pc - pa)
        corner_area = areas[sel] * (sab * sac).ravel()
        corner_centroid = (pa + qb + qc) / 3.0
        if odd_negative:
            area += float(corner_area.sum())
            moment += np.sum(corner_area[:, None] * corner_centroid, axis=0)
        else:
            rest = areas[sel] - corner_area
            area += float(rest.sum())
            moment += np.sum(areas[sel, None] * centroids[sel] - corner_area[:, None] * corner_centroid, axis=0)
    return area, moment


def interface_area(mesh: StructuredMesh, phi: np.ndarray) -> float:
    """Area of {phi < 0} for the P1 interpolant"""
    return _negative_region_moments(mesh, phi)[0]


def interface_centroid(mesh: StructuredMesh, phi: np.ndarray) -> np.ndarray:
    """Centroid of {phi < 0} from sub-cell zero crossings"""
    area, moment = _negative_region_moments(mesh, phi)
    if area == 0.0:
        return np.array([np.nan, np.nan])
    return moment / area


def symmetric_difference_area(mesh: StructuredMesh, phi_a: np.ndarray, phi_b: np.ndarray) -> float:
    """Area of the symmetric difference of two negative sets, via nodal min and max"""
    union = interface_area(mesh, np.minimum(phi_a, phi_b))
    intersection = interface_area(mesh, np.maximum(phi_a, phi_b))
    return union - intersection
