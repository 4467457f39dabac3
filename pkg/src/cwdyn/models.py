"""Concrete surface dynamical systems and their chart geometry.

Three homeomorphism families are provided:

* ``cat-map`` -- a hyperbolic toral automorphism given by an integer
  matrix with determinant +-1 (default ``[[2, 1], [1, 1]]``) acting on
  the flat torus ``[0,1)^2``.
* ``sphere-pA`` -- the same automorphism pushed down to the quotient
  sphere ``T^2 / (v ~ -v)``; the four images of the half-integer points
  become one-prong singularities ("spines").
* ``north-south`` -- a non-hyperbolic control example on the round
  sphere with one repelling and one attracting fixed point.

Points are raw chart coordinates wrapped in :class:`Point`.  Iteration
of the toral families is performed in exact integer arithmetic modulo 1
(floats in, floats out, a single rounding at the end), so long orbits do
not lose precision to the expansion rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

TORUS = "torus"
SPHERE_QUOTIENT = "sphere-quotient"
SPHERE_GEOGRAPHIC = "sphere-geographic"

CAT_MAP = "cat-map"
SPHERE_PA = "sphere-pA"
NORTH_SOUTH = "north-south"

MODEL_KINDS = (CAT_MAP, SPHERE_PA, NORTH_SOUTH)

# fold detection threshold for quotient singularities
SPINE_TOL = 1e-9


class ChartError(ValueError):
    """Chart of a point does not match the operation's expectation."""


class HorizonError(ValueError):
    """Requested iterate exceeds the configured horizon."""


class ModelCapabilityError(ValueError):
    """Operation is not defined for this model kind."""


class CalibrationError(RuntimeError):
    """No expansivity certificate exists for the requested constant."""


class BudgetError(RuntimeError):
    """A refinement or search budget was exhausted."""


@dataclass(frozen=True)
class Point:
    """A chart point: ``chart`` name plus a coordinate pair.

    Toral points silently carry an exact dyadic form (num_x, num_y, den)
    of their coordinates; integer-matrix iteration preserves the
    denominator, so orbits compose with no accumulated rounding and
    iterate(iterate(x, n), -n) returns x bit for bit.
    """

    chart: str
    coords: tuple[float, float]
    exact: tuple | None = field(default=None, compare=False, repr=False)

    def xy(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)

    def dyadic(self) -> tuple:
        """Exact (num_x, num_y, den) of the coordinates."""
        if self.exact is not None:
            return self.exact
        n1, d1 = float(self.coords[0]).as_integer_ratio()
        n2, d2 = float(self.coords[1]).as_integer_ratio()
        dd = max(d1, d2)
        return (n1 * (dd // d1), n2 * (dd // d2), dd)


def _wrap1(v):
    """Reduce mod 1 into [0, 1), mapping values within 1 ulp of 1 to 0."""
    w = np.asarray(v, dtype=float) % 1.0
    return np.where(w >= 1.0 - 1e-15, 0.0, w)


def canonical_rep(xy) -> np.ndarray:
    """Lexicographically smallest of {v mod 1, -v mod 1}.

    This is the canonical representative of a sphere-quotient class.
    """
    a = _wrap1(np.asarray(xy, dtype=float))
    b = _wrap1(-a)
    if (a[0], a[1]) <= (b[0], b[1]):
        return a
    return b


def torus_norm(w) -> float:
    """Distance from a displacement vector to the integer lattice."""
    w = np.asarray(w, dtype=float)
    r = w - np.round(w)
    return float(np.hypot(r[..., 0], r[..., 1])) if r.ndim else float(np.hypot(r[0], r[1]))


def _torus_norm_arr(w: np.ndarray) -> np.ndarray:
    r = w - np.round(w)
    return np.hypot(r[..., 0], r[..., 1])


def _geo_embed(xy: np.ndarray) -> np.ndarray:
    # chart (lon, colat) in [0,1) x [0,1]; unit sphere embedding
    lon = 2.0 * math.pi * xy[..., 0]
    th = math.pi * xy[..., 1]
    st = np.sin(th)
    return np.stack([st * np.cos(lon), st * np.sin(lon), np.cos(th)], axis=-1)


def chart_distance(chart: str, a, b) -> float:
    """Metric of the chart: flat torus, quotient of it, or round sphere.

    The round-sphere distance is scaled by 1/pi so the three charts share
    a comparable desk scale (diameters 0.707, 0.707/2-ish, 1).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if chart == TORUS:
        return torus_norm(a - b)
    if chart == SPHERE_QUOTIENT:
        return min(torus_norm(a - b), torus_norm(a + b))
    if chart == SPHERE_GEOGRAPHIC:
        d = float(np.dot(_geo_embed(a), _geo_embed(b)))
        return math.acos(max(-1.0, min(1.0, d))) / math.pi
    raise ChartError(f"unknown chart {chart!r}")


def chart_distance_arr(chart: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized :func:`chart_distance` over broadcastable (..., 2) arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if chart == TORUS:
        return _torus_norm_arr(a - b)
    if chart == SPHERE_QUOTIENT:
        return np.minimum(_torus_norm_arr(a - b), _torus_norm_arr(a + b))
    if chart == SPHERE_GEOGRAPHIC:
        d = np.sum(_geo_embed(a) * _geo_embed(b), axis=-1)
        return np.arccos(np.clip(d, -1.0, 1.0)) / math.pi
    raise ChartError(f"unknown chart {chart!r}")


def _check_matrix(matrix) -> tuple[tuple[int, int], tuple[int, int]]:
    m = np.asarray(matrix)
    if m.shape != (2, 2) or not np.all(m == np.round(m)):
        raise ValueError("matrix must be an integer 2x2 array")
    m = m.astype(int)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det not in (1, -1):
        raise ValueError(f"matrix must have determinant +-1, got {det}")
    eig = np.linalg.eigvals(m.astype(float))
    if np.any(np.isclose(np.abs(eig), 1.0)):
        raise ValueError("matrix must be hyperbolic (no eigenvalue on the unit circle)")
    return ((int(m[0, 0]), int(m[0, 1])), (int(m[1, 0]), int(m[1, 1])))


@dataclass(frozen=True)
class SystemModel:
    """A concrete system: model kind, defining data, and discretization caps.

    ``c`` is the expansivity working constant used by default throughout
    (0.25 for the toral families; the north-south map has none and keeps
    a placeholder for reporting only).  ``horizon`` caps |n| in iterate
    requests; ``resolution`` is the default polyline vertex count.
    """

    kind: str
    matrix: tuple[tuple[int, int], tuple[int, int]] = ((2, 1), (1, 1))
    c: float = 0.25
    resolution: int = 64
    horizon: int = 160

    @property
    def chart(self) -> str:
        if self.kind == CAT_MAP:
            return TORUS
        if self.kind == SPHERE_PA:
            return SPHERE_QUOTIENT
        return SPHERE_GEOGRAPHIC

    @property
    def is_hyperbolic(self) -> bool:
        return self.kind in (CAT_MAP, SPHERE_PA)

    def point(self, x: float, y: float) -> Point:
        c = tuple(float(v) for v in self._normalize(np.array([x, y], dtype=float)))
        p = Point(self.chart, c)
        if self.kind == NORTH_SOUTH:
            return p
        return Point(self.chart, c, exact=p.dyadic())

    def rational_point(self, nx: int, ny: int, den: int) -> Point:
        """Point with exactly rational coordinates (nx/den, ny/den)."""
        if self.kind == NORTH_SOUTH:
            raise ModelCapabilityError("rational points are a toral feature")
        u, v = nx % den, ny % den
        if self.chart == SPHERE_QUOTIENT:
            u2, v2 = (-u) % den, (-v) % den
            if (u2, v2) < (u, v):
                u, v = u2, v2
        return Point(self.chart, (u / den, v / den), exact=(u, v, den))

    def _normalize(self, xy: np.ndarray) -> np.ndarray:
        if self.chart == TORUS:
            return _wrap1(xy)
        if self.chart == SPHERE_QUOTIENT:
            return canonical_rep(xy)
        lon = float(_wrap1(xy[0]))
        colat = float(min(1.0, max(0.0, xy[1])))
        return np.array([lon, colat])

    # -- linear data of the toral families ------------------------------

    @property
    def expansion_rate(self) -> float:
        """Modulus of the expanding eigenvalue."""
        if not self.is_hyperbolic:
            raise ModelCapabilityError("north-south map has no hyperbolic splitting")
        return float(np.max(np.abs(np.linalg.eigvals(np.asarray(self.matrix, dtype=float)))))

    def eigen_direction(self, stable: bool) -> np.ndarray:
        """Unit eigenvector of the stable or unstable line."""
        if not self.is_hyperbolic:
            raise ModelCapabilityError("north-south map has no hyperbolic splitting")
        m = np.asarray(self.matrix, dtype=float)
        w, v = np.linalg.eig(m)
        idx = int(np.argmin(np.abs(w))) if stable else int(np.argmax(np.abs(w)))
        e = v[:, idx] / np.linalg.norm(v[:, idx])
        # fix an orientation so repeated runs agree bit for bit
        if e[0] < 0 or (e[0] == 0 and e[1] < 0):
            e = -e
        return e

    def direction_rate(self, stable: bool) -> float:
        """Eigenvalue modulus along the chosen direction (in (0,1) if stable)."""
        m = np.asarray(self.matrix, dtype=float)
        w = np.abs(np.linalg.eigvals(m))
        return float(np.min(w)) if stable else float(np.max(w))


def make_model(kind: str, matrix=None, c: float | None = None,
               resolution: int = 64, horizon: int = 160) -> SystemModel:
    """Build a :class:`SystemModel`, validating the defining data."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if kind == NORTH_SOUTH:
        if matrix is not None:
            raise ValueError("north-south map takes no matrix")
        return SystemModel(kind=kind, c=c if c is not None else 0.25,
                           resolution=resolution, horizon=horizon)
    mat = _check_matrix(matrix if matrix is not None else ((2, 1), (1, 1)))
    return SystemModel(kind=kind, matrix=mat, c=c if c is not None else 0.25,
                       resolution=resolution, horizon=horizon)


# -- exact toral iteration ----------------------------------------------


@lru_cache(maxsize=4096)
def _mat_power(matrix: tuple, n: int) -> tuple:
    """Integer matrix power, n of either sign (determinant +-1)."""
    ((a, b), (c, d)) = matrix
    if n == 0:
        return ((1, 0), (0, 1))
    if n < 0:
        det = a * d - b * c
        inv = ((d * det, -b * det), (-c * det, a * det))
        return _mat_power(inv, -n)
    half = _mat_power(matrix, n // 2)
    sq = _mat_mul(half, half)
    return _mat_mul(sq, matrix) if n % 2 else sq


def _mat_mul(p: tuple, q: tuple) -> tuple:
    return (
        (p[0][0] * q[0][0] + p[0][1] * q[1][0], p[0][0] * q[0][1] + p[0][1] * q[1][1]),
        (p[1][0] * q[0][0] + p[1][1] * q[1][0], p[1][0] * q[0][1] + p[1][1] * q[1][1]),
    )


def _exact_linear_mod1(matrix_pow: tuple, xy) -> np.ndarray:
    """Apply an integer matrix to a float pair, exactly, mod 1.

    Floats are binary rationals, so the matrix action and the mod-1
    reduction are computed in integer arithmetic; only the final division
    rounds.
    """
    n1, d1 = float(xy[0]).as_integer_ratio()
    n2, d2 = float(xy[1]).as_integer_ratio()
    dd = max(d1, d2)  # both are powers of two
    a = n1 * (dd // d1)
    b = n2 * (dd // d2)
    ((m00, m01), (m10, m11)) = matrix_pow
    u = (m00 * a + m01 * b) % dd
    v = (m10 * a + m11 * b) % dd
    return np.array([u / dd, v / dd])


def iterate(sys: SystemModel, x: Point, n: int) -> Point:
    """n-th iterate of ``x`` (n of either sign, |n| <= horizon)."""
    if abs(n) > sys.horizon:
        raise HorizonError(f"|n|={abs(n)} exceeds horizon {sys.horizon}")
    if x.chart != sys.chart:
        raise ChartError(f"point chart {x.chart!r} does not match model chart {sys.chart!r}")
    if n == 0:
        return x
    if sys.kind == NORTH_SOUTH:
        lon, colat = x.coords
        p = 2.0 ** n
        colat2 = p * colat / (1.0 + (p - 1.0) * colat)
        return Point(sys.chart, (float(lon), float(min(1.0, max(0.0, colat2)))))
    a, b, d = x.dyadic()
    ((m00, m01), (m10, m11)) = _mat_power(sys.matrix, n)
    u = (m00 * a + m01 * b) % d
    v = (m10 * a + m11 * b) % d
    if sys.chart == SPHERE_QUOTIENT:
        u2, v2 = (-u) % d, (-v) % d
        if (u2, v2) < (u, v):
            u, v = u2, v2
    return Point(sys.chart, (u / d, v / d), exact=(u, v, d))


def iterate_xy(sys: SystemModel, xy, n: int) -> np.ndarray:
    """Exact iterate on raw chart coordinates (same contract as iterate)."""
    return iterate(sys, Point(sys.chart, (float(xy[0]), float(xy[1]))), n).xy()


def iterate_arr(sys: SystemModel, pts: np.ndarray, n: int) -> np.ndarray:
    """Vectorized float iterate of an (N, 2) batch.

    Used for grids where per-point exact arithmetic would dominate; the
    float error is bounded by ~|eig|^|n| ulp, negligible for the small
    |n| this path is used with.
    """
    if abs(n) > sys.horizon:
        raise HorizonError(f"|n|={abs(n)} exceeds horizon {sys.horizon}")
    pts = np.asarray(pts, dtype=float)
    if sys.kind == NORTH_SOUTH:
        p = 2.0 ** n
        colat = p * pts[:, 1] / (1.0 + (p - 1.0) * pts[:, 1])
        return np.stack([pts[:, 0], np.clip(colat, 0.0, 1.0)], axis=1)
    m = np.array(_mat_power(sys.matrix, n), dtype=float)
    out = _wrap1(pts @ m.T)
    if sys.chart == SPHERE_QUOTIENT:
        alt = _wrap1(-out)
        swap = (alt[:, 0] < out[:, 0]) | ((alt[:, 0] == out[:, 0]) & (alt[:, 1] < out[:, 1]))
        out = np.where(swap[:, None], alt, out)
    return out


def distance(sys: SystemModel, a: Point, b: Point) -> float:
    if a.chart != b.chart:
        raise ChartError(f"chart mismatch: {a.chart!r} vs {b.chart!r}")
    if a.chart != sys.chart:
        raise ChartError(f"point chart {a.chart!r} does not match model chart {sys.chart!r}")
    return chart_distance(a.chart, a.xy(), b.xy())


# -- local stable/unstable arcs -----------------------------------------


def _is_half_lattice(xy: np.ndarray, tol: float = SPINE_TOL) -> bool:
    """True when 2*xy is within tol of the integer lattice (quotient spine)."""
    return torus_norm(2.0 * np.asarray(xy, dtype=float)) <= tol


def _want_stable(kind: str) -> bool:
    if kind not in ("stable", "unstable"):
        raise ValueError(f"kind must be 'stable' or 'unstable', got {kind!r}")
    return kind == "stable"


def local_arc(sys: SystemModel, x: Point, kind: str, eps: float,
              resolution: int | None = None):
    """Local stable (or unstable) arc of ``x`` at scale ``eps``.

    The arc is the connected piece of {y : d(f^n x, f^n y) <= eps for all
    forward (resp. backward) n} through x: a straight eigen-segment of
    half-length eps in the universal cover.  On the quotient sphere the
    arc of a spine folds onto a single prong with x as an endpoint.

    Returns a marked continuum whose marks are the arc endpoints and
    which carries its straight lift for downstream exact geometry.
    """
    from .continua import MarkedContinuum, StraightLift

    stable = _want_stable(kind)
    if not sys.is_hyperbolic:
        raise ModelCapabilityError("local arcs require a hyperbolic model")
    if not 0.0 < eps < sys.c:
        raise CalibrationError(f"eps must lie in (0, c={sys.c}), got {eps}")
    if x.chart != sys.chart:
        raise ChartError(f"point chart {x.chart!r} does not match model chart {sys.chart!r}")
    res = sys.resolution if resolution is None else int(resolution)
    if res < 2:
        raise ValueError("resolution must be at least 2")
    e = sys.eigen_direction(stable=stable)
    xy = x.xy()
    if sys.chart == SPHERE_QUOTIENT and _is_half_lattice(xy):
        start, length = xy.copy(), eps  # one-prong: the spine is an endpoint
    else:
        start, length = xy - eps * e, 2.0 * eps
    t = np.linspace(0.0, 1.0, res)
    if res > 2:
        # make sure x itself is a vertex
        tx = float(np.dot(xy - start, e)) / length
        if not np.any(np.isclose(t, tx, atol=1e-12)):
            t = np.sort(np.append(t, tx))
    lift = StraightLift(start=start, direction=e, length=length,
                        stable=stable, chart=sys.chart)
    return MarkedContinuum(chart=sys.chart, vertices=lift.project(t), params=t,
                           mark_p=0, mark_q=len(t) - 1, lift=lift)


def is_spine(sys: SystemModel, x: Point, eps: float, tol: float = 1e-9) -> bool:
    """True when x is an endpoint of its own local stable arc."""
    arc = local_arc(sys, x, "stable", eps, resolution=3)
    d0 = chart_distance(sys.chart, x.xy(), arc.vertices[0])
    d1 = chart_distance(sys.chart, x.xy(), arc.vertices[-1])
    return min(d0, d1) <= tol


def spine_points(sys: SystemModel) -> list[Point]:
    """The involution fixed classes of the quotient sphere."""
    if sys.kind != SPHERE_PA:
        raise ModelCapabilityError("spines exist only on the quotient sphere model")
    return [sys.point(a, b) for a, b in ((0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5))]
