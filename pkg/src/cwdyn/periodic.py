"""Constructive periodic points by iterated rectangle correction.

Given a recurrent pair (y, k) with f^k(y) close to y, each step first
crosses the local stable arc of y_n with the local unstable arc of
f^k(y_n); the crossing z shares the unstable coordinate of y_n, so the
stable part of the displacement from the limit dies by the k-th power
of the contraction rate.  The crossing is then transported back by
f^{-k} and holonomy-corrected along its stable arc onto the unstable
arc of z, which contracts the unstable part by the same factor.  The
composite step is a uniform contraction toward a genuine k-periodic
point.  Every step records the cw-size of the connecting path F_n and
checks it against the geometric envelope; violations are returned as
certified counterexample records, never silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import models
from .continua import MarkedContinuum, concat, intersect, subcontinuum
from .cwmetric import MetricConstants, cw_metric
from .holonomy import HolonomyFault, HolonomyParams, product_structure_radius
from .models import BudgetError, Point


def tail_exponent(a: float, b: float, eps: float) -> int:
    """Smallest k with a*b^k < 1 and geometric tail sum(n>=1) <= eps.

    The tail is the exact series value r/(1-r) with r = a*b^k.  The
    returned k automatically satisfies log(a) + k*log(b) < 0.
    """
    if not a > 1.0:
        raise ValueError(f"need a > 1, got {a}")
    if not 0.0 < b < 1.0:
        raise ValueError(f"need b in (0,1), got {b}")
    if not eps > 0.0:
        raise ValueError(f"need eps > 0, got {eps}")
    k = max(1, int(math.floor(-math.log(a) / math.log(b))) - 1)
    while True:
        r = a * b ** k
        if r < 1.0 and (math.isinf(eps) or r / (1.0 - r) <= eps):
            return k
        k += 1


@dataclass(frozen=True)
class KatokParams:
    """The chained scale choices behind one periodic-point run.

    alpha_target is the output accuracy d(q, p); c, eps, delta_prime,
    delta, gamma, beta descend from it; k0 is the smallest admissible
    return exponent and k the one actually used.
    """

    alpha_target: float
    c: float
    eps: float
    delta_prime: float
    delta: float
    gamma: float
    beta: float
    k0: int
    k: int

    def __post_init__(self):
        for name in ("alpha_target", "c", "eps", "delta_prime", "delta", "gamma", "beta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.k < self.k0 or self.k0 < 1:
            raise ValueError("need k >= k0 >= 1")


def validate_chain(params: KatokParams, consts: MetricConstants) -> None:
    """Check the proof's chain of scale choices, raising on violation."""
    lam_c = 1.0 / consts.lam
    checks = [
        (params.c < params.alpha_target / 2.0, "c < alpha_target/2"),
        (params.delta == params.delta_prime / 2.0, "delta = delta_prime/2"),
        (params.gamma < params.delta / 2.0, "gamma < delta/2"),
        (params.beta < params.gamma / 3.0, "beta < gamma/3"),
        (4.0 * lam_c ** params.k0 * params.c <= params.beta,
         "4*lam^k0*c <= beta"),
    ]
    a = 4.0 * (1.0 + params.delta) ** 2
    r = a * lam_c ** params.k0
    checks.append((r < 1.0 and r / (1.0 - r) <= params.beta,
                   "geometric tail at k0 <= beta"))
    for ok, label in checks:
        if not ok:
            raise ValueError(f"parameter chain violated: {label}")


def plan_katok(sys, consts: MetricConstants, alpha_target: float,
               gamma: float | None = None, sample_budget: int = 120,
               seed: int = 0) -> KatokParams:
    """Derive a full parameter chain for the target accuracy.

    gamma defaults to just under delta/2; it is the one scale the chain
    cannot pin down a priori (it reflects the empirically measured
    pseudo-isometry modulus at eta = delta), so it stays tunable.
    """
    if not alpha_target > 0.0:
        raise ValueError("alpha_target must be positive")
    c = min(consts.c, 0.45 * alpha_target)
    eps = consts.c / 2.0
    delta_prime = product_structure_radius(sys, eps, sample_budget=sample_budget,
                                           seed=seed)
    delta = delta_prime / 2.0
    if gamma is None:
        gamma = 0.49 * delta
    beta = 0.99 * gamma / 3.0
    lam_c = 1.0 / consts.lam
    k_tail = tail_exponent(4.0 * (1.0 + delta) ** 2, lam_c, beta)
    k_scale = max(1, int(math.ceil(math.log(4.0 * c / beta) / math.log(1.0 / lam_c))))
    k0 = max(k_tail, k_scale)
    params = KatokParams(alpha_target=alpha_target, c=c, eps=eps,
                         delta_prime=delta_prime, delta=delta, gamma=gamma,
                         beta=beta, k0=k0, k=k0)
    validate_chain(params, consts)
    return params


# -- recurrent return pairs ------------------------------------------------


def _exact_period(sys, num_x: int, num_y: int, den: int, cap: int):
    """Exact orbit period of the rational point, or None past cap steps."""
    ((a, b), (c, d)) = sys.matrix
    if sys.chart == models.SPHERE_QUOTIENT:
        def canon(s):
            t = ((-s[0]) % den, (-s[1]) % den)
            return min(s, t)
    else:
        def canon(s):
            return s
    start = canon((num_x % den, num_y % den))
    u, v = start
    for j in range(1, cap + 1):
        u, v = (a * u + b * v) % den, (c * u + d * v) % den
        if canon((u, v)) == start:
            return j
    return None


def find_return(sys, p: Point, bound: float, k_min: int,
                search_budget: int = 200000):
    """A nearby recurrent pair: y with d(y,p) < bound, d(f^k(y),p) < bound.

    Searches the rational grid around p in order of distance; every
    candidate is exactly periodic, so k is its period rounded up to a
    multiple at least k_min and both bounds hold by construction.
    Candidates whose k would exceed the model horizon are skipped.
    Raises BudgetError with diagnostics when the exact orbit scans
    exhaust the budget.
    """
    if k_min < 1:
        raise ValueError("k_min must be at least 1")
    if not bound > 0.0:
        raise ValueError("bound must be positive")
    pxy = p.xy()
    cands = []
    seen = set()
    for den in range(1, 201):
        nx = round(pxy[0] * den)
        ny = round(pxy[1] * den)
        for dx in (0, -1, 1):
            for dy in (0, -1, 1):
                fx = Fraction((int(nx) + dx) % den, den)
                fy = Fraction((int(ny) + dy) % den, den)
                key = (fx, fy)
                if key in seen:
                    continue
                seen.add(key)
                xy = np.array([float(fx), float(fy)])
                dist = models.chart_distance(sys.chart, pxy, xy)
                if dist < bound:
                    cands.append((dist, den, fx, fy))
    cands.sort(key=lambda t: (t[0], t[1], float(t[2]), float(t[3])))

    steps_used = 0
    tried = 0
    horizon_skipped = 0
    for dist, den, fx, fy in cands:
        com = math.lcm(fx.denominator, fy.denominator)
        cap = min(6 * com + 12, search_budget - steps_used)
        if cap <= 0:
            break
        tried += 1
        per = _exact_period(sys, fx.numerator * (com // fx.denominator),
                            fy.numerator * (com // fy.denominator), com, cap)
        steps_used += per if per is not None else cap
        if per is None:
            continue
        k = per * math.ceil(k_min / per)
        if k > sys.horizon:
            horizon_skipped += 1
            continue
        y = sys.rational_point(fx.numerator * (com // fx.denominator),
                               fy.numerator * (com // fy.denominator), com)
        return y, k
    err = BudgetError(f"no recurrent pair within bound {bound} of {tuple(p.coords)} "
                      f"after {tried} candidates / {steps_used} orbit steps")
    err.diagnostics = {"candidates_tried": tried, "orbit_steps": steps_used,
                       "nearest_distance": cands[0][0] if cands else math.inf,
                       "bound": bound, "k_min": k_min,
                       "horizon_skipped": horizon_skipped}
    raise err


# -- the rectangle iteration ----------------------------------------------


def _oriented(leg: MarkedContinuum) -> MarkedContinuum:
    """The same polyline with vertices running from point_p to point_q."""
    if leg.mark_p <= leg.mark_q:
        return leg
    n = leg.n_vertices
    return MarkedContinuum(chart=leg.chart, vertices=leg.vertices[::-1].copy(),
                           mark_p=n - 1 - leg.mark_p, mark_q=n - 1 - leg.mark_q)


def _step_continuum(sys, ca, cb, start: Point, mid: Point, end: Point) -> MarkedContinuum:
    leg_a = _oriented(subcontinuum(ca, start, mid, tol=1e-7))
    leg_b = _oriented(subcontinuum(cb, mid, end, tol=1e-7))
    return concat([leg_a, leg_b], tol=1e-7)


def _best_crossing(sys, ca, cb, start: Point, end: Point,
                   consts: MetricConstants, label: str):
    """The crossing of ca and cb whose connecting path has smallest cw-size."""
    cands = intersect(ca, cb, tol=1e-9)
    if not cands:
        raise HolonomyFault(f"no crossing at {label}")
    best = None
    for z in cands:
        try:
            path = _step_continuum(sys, ca, cb, start, z, end)
        except ValueError:
            continue
        d_f = cw_metric(sys, path, consts, depth=3)
        if best is None or d_f < best[0]:
            best = (d_f, z)
    if best is None:
        raise HolonomyFault(f"no admissible crossing branch at {label}")
    return best[1], best[0]


def katok_iterate(sys, y: Point, k: int, params: KatokParams,
                  consts: MetricConstants, max_steps: int = 40,
                  tol: float = 1e-11) -> dict:
    """Run the corrective loop from the recurrent pair (y, k).

    Each step's connecting path F_n (stable leg from y_n to the
    crossing z, unstable leg on to f^k(y_n)) realizes one holonomy
    rectangle side pair; the crossing minimizing D(F_n) is taken when a
    fold offers several.  y_{n+1} is the stable holonomy of f^{-k}(z)
    onto the unstable arc of z, so both displacement components
    contract by the k-th power of the rate.  Steps record D(F_n)
    against the envelope [(1+delta)^2 * 4]^n * lam^{nk} * c with lam
    the contraction rate; violations become counterexample records in
    the result.
    """
    lam_c = 1.0 / consts.lam
    ratio = 4.0 * (1.0 + params.delta) ** 2 * lam_c ** k
    hol = HolonomyParams(eps=params.eps, delta=params.delta, resolution=9)
    y_n = y
    seq = [y]
    steps = []
    counterexamples = []
    converged = False
    consec = 0
    for n in range(max_steps + 1):
        fky = models.iterate(sys, y_n, k)
        gap = models.distance(sys, y_n, fky)
        if gap == 0.0:
            converged = True
            break
        if gap < tol:
            consec += 1
            if consec >= 3:
                converged = True
                break
        else:
            consec = 0
        if n == max_steps:
            break
        cs = models.local_arc(sys, y_n, "stable", params.eps,
                              resolution=hol.resolution)
        cu = models.local_arc(sys, fky, "unstable", params.eps,
                              resolution=hol.resolution)
        z, d_f = _best_crossing(sys, cs, cu, y_n, fky, consts,
                                f"step {n} (gap {gap:.3g})")
        # pull the crossing back one return and holonomy-correct: the
        # unstable displacement component contracts here
        fmz = models.iterate(sys, z, -k)
        cu2 = models.local_arc(sys, z, "unstable", params.eps,
                               resolution=hol.resolution)
        cs2 = models.local_arc(sys, fmz, "stable", params.eps,
                               resolution=hol.resolution)
        y_next, _ = _best_crossing(sys, cu2, cs2, z, fmz, consts,
                                   f"step {n} transport")
        bound = ratio ** (n + 1) * params.c
        ok = d_f <= bound
        step = {"n": n + 1, "gap": gap, "D_F": d_f, "bound": bound, "ok": ok}
        steps.append(step)
        if not ok:
            counterexamples.append(step)
        y_n = y_next
        seq.append(y_n)
    q = y_n
    residual = models.distance(sys, q, models.iterate(sys, q, k))
    return {"q": q, "k": k, "sequence": seq, "steps": steps,
            "converged": converged, "residual": residual,
            "envelope_ok": not counterexamples,
            "counterexamples": counterexamples}


def verify_periodic(sys, q: Point, k: int, tol: float = 1e-9) -> dict:
    """Certify q = f^k(q) by exact orbit residual."""
    residual = models.distance(sys, q, models.iterate(sys, q, k))
    return {"ok": residual < tol, "residual": residual, "k": k}
