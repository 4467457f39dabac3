"""Self-similar hyperbolic metric on marked continua.

The pipeline, for a homeomorphism f with expansivity working constant c:

* ``escape_time``  N(C) = min{|n| : diam(f^n(C)) > c}, infinity for
  singletons, with a ">= horizon" sentinel when truncated.
* ``escape_weight``  rho(C) = alpha^(-N(C)), alpha = 2^(1/m).
* ``chain_weight``  P(C_(p,q)) = inf over chains of sub-continua joining
  p to q and covering C of the summed escape weights, approximated by a
  shortest-path DP over dyadic cut points (an upper bound on the true
  infimum that still satisfies P <= rho <= 4 P).
* ``window_weight``  D'(C) = max over |i| <= n0-1 of P(f^i C)/lam^|i|.
* ``cw_metric``  D(C) = sup over i in Z of D'(f^i C)/lam^|i|, evaluated
  with an exact stopping rule (D' <= 1 makes the tail geometric).

Iterated diameters of model arcs are decided in closed form from their
straight lifts: a cover segment with eigen-components (a_u, a_s) has
length hypot(a_u su^e, a_s ss^e) at iterate e, and on the torus a
straight segment of length L has diameter > thr iff L > thr (for
thr < 0.45).  On the quotient sphere the fold v ~ -v can suppress an
escape; that case is decided by a Lipschitz-certified scan of the
distance-to-lattice function along the doubled segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .models import (
    CalibrationError, ModelCapabilityError, TORUS, SPHERE_QUOTIENT,
    NORTH_SOUTH, chart_distance_arr,
)
from .continua import MarkedContinuum, diameter, image

INFINITY = math.inf

# torus straight-segment diameter predicates are exact below this scale
MAX_C = 0.45


@dataclass(frozen=True)
class MetricConstants:
    """Calibrated constants of the metric pipeline."""

    c: float
    m: int
    alpha: float
    n0: int
    k: float
    lam: float
    xi: float
    horizon: int

    def __post_init__(self):
        if not (self.alpha > 1 and self.k > 1 and self.lam > 1):
            raise ValueError("alpha, k, lam must all exceed 1")
        if abs(self.alpha - 2.0 ** (1.0 / self.m)) > 1e-12:
            raise ValueError("alpha must equal 2^(1/m)")
        if abs(self.k - self.alpha ** self.n0 / 4.0) > 1e-12:
            raise ValueError("k must equal alpha^n0 / 4")
        if abs(self.lam - self.k ** (1.0 / self.n0)) > 1e-12:
            raise ValueError("lam must equal k^(1/n0)")
        want_xi = 1.0 / (4.0 * self.alpha * self.lam ** (self.n0 - 1))
        if abs(self.xi - want_xi) > 1e-12:
            raise ValueError("xi must equal 1/(4 alpha lam^(n0-1))")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


def constants_for(c: float, m: int, tail: float = 1e-12) -> MetricConstants:
    """Derive the full constant set from c and the escape bound m."""
    m = int(m)
    alpha = 2.0 ** (1.0 / m)
    # smallest n0 with alpha^n0/4 > 1; exactly: 2^(n0/m) > 4 iff n0 > 2m
    n0 = 2 * m + 1
    k = 2.0 ** (n0 / m - 2.0)
    lam = 2.0 ** (1.0 / (m * n0))
    horizon = max(1, int(math.ceil(math.log(1.0 / tail) / math.log(lam))))
    while lam ** (-horizon) >= tail:
        horizon += 1
    xi = 1.0 / (4.0 * alpha * lam ** (n0 - 1))
    return MetricConstants(c=float(c), m=m, alpha=alpha, n0=n0, k=k,
                           lam=lam, xi=xi, horizon=horizon)


# -- closed-form diameter machinery ---------------------------------------


def _dist_lattice(pts: np.ndarray) -> np.ndarray:
    r = pts - np.round(pts)
    return np.hypot(r[..., 0], r[..., 1])


def _fold_escape(w0: np.ndarray, d: np.ndarray, lo: float, hi: float,
                 thr: float) -> bool:
    """Certified check of sup{dist(w0 + s*d, Z^2) : s in [lo, hi]} > thr.

    dist-to-lattice is 1-Lipschitz along the (unit-direction) segment, so
    sampling at step h bounds the sup by max + h/2; intervals that cannot
    be certified are refined.

    Long windows short-circuit: if one coordinate sweeps more than
    2*(thr + margin), some point has that coordinate at distance
    > thr from the integers, hence distance > thr from the lattice.
    """
    if hi < lo:
        return False
    dmax = max(abs(float(d[0])), abs(float(d[1])))
    if (hi - lo) * dmax >= 2.0 * thr + 1e-6:
        return True
    h = 0.02
    intervals = [(lo, hi)]
    for _ in range(9):
        sigmas = []
        for a, b in intervals:
            n = max(2, int(math.ceil((b - a) / h)) + 1)
            if n > 300000:
                n = 300000
            sigmas.append(np.linspace(a, b, n))
        sig = np.concatenate(sigmas)
        step = max((b - a) / max(n - 1, 1) for (a, b), n in
                   zip(intervals, (len(s) for s in sigmas)))
        g = _dist_lattice(w0[None, :] + sig[:, None] * d[None, :])
        if float(g.max()) > thr:
            return True
        keep = g + step / 2.0 > thr
        if not keep.any():
            return False
        pts = sig[keep]
        intervals = []
        for s in pts:
            a, b = s - step / 2.0, s + step / 2.0
            if intervals and a <= intervals[-1][1] + 1e-15:
                intervals[-1] = (intervals[-1][0], b)
            else:
                intervals.append((a, b))
        h = step / 8.0
        if h < 1e-10:
            break
    return False  # unresolved at 1e-10 scale: treat as boundary non-escape


class _EigenData:
    """Eigen frame of the toral model, shared by all engines."""

    def __init__(self, sys):
        self.sys = sys
        self.eu = sys.eigen_direction(stable=False)
        self.es = sys.eigen_direction(stable=True)
        a = np.asarray(sys.matrix, dtype=float)
        self.su = float(self.eu @ (a @ self.eu))  # signed eigenvalues
        self.ss = float(self.es @ (a @ self.es))
        self.binv = np.linalg.inv(np.column_stack([self.eu, self.es]))

    def components(self, vec: np.ndarray) -> tuple[float, float]:
        au, as_ = self.binv @ np.asarray(vec, dtype=float)
        return float(au), float(as_)


class _Piece:
    """One straight cover segment of a path: start + t*(au*eu + as*es)."""

    __slots__ = ("s", "au", "as_")

    def __init__(self, s, au, as_):
        self.s = np.asarray(s, dtype=float)
        self.au = float(au)
        self.as_ = float(as_)


def _pieces_of(sys, cont: MarkedContinuum, frame: _EigenData) -> list:
    """Decompose a continuum into straight cover pieces.

    Lifted arcs give one piece with exact eigen components; plain
    polylines are unwrapped edge by edge, merging collinear runs.
    """
    from .continua import unwrap_to

    if cont.lift is not None:
        lf = cont.lift
        d = lf.dir_arr
        if lf.stable is True:
            comp = (0.0, lf.length * math.copysign(1.0, float(d @ frame.es)))
        elif lf.stable is False:
            comp = (lf.length * math.copysign(1.0, float(d @ frame.eu)), 0.0)
        else:
            comp = frame.components(lf.length * d)
        return [_Piece(lf.start_arr, *comp)]
    v = cont.vertices
    if len(v) < 2:
        return []
    pieces = []
    anchor = v[0].copy()
    run = None  # (start, accumulated vec)
    prev = anchor
    for i in range(1, len(v)):
        nxt = unwrap_to(cont.chart, prev, v[i])
        dv = nxt - prev
        if run is not None:
            cr = run[1][0] * dv[1] - run[1][1] * dv[0]
            if abs(cr) <= 1e-12 * (np.linalg.norm(run[1]) * np.linalg.norm(dv) + 1e-300) \
                    and float(run[1] @ dv) >= 0:
                run = (run[0], run[1] + dv)
                prev = nxt
                continue
            pieces.append(run)
        run = (prev.copy(), dv.copy())
        prev = nxt
    if run is not None:
        pieces.append(run)
    out = []
    for s, vec in pieces:
        au, as_ = frame.components(vec)
        out.append(_Piece(np.asarray(models._wrap1(s)), au, as_))
    return out


class _PathEngine:
    """Iterated-diameter and escape-time engine for a path of pieces."""

    def __init__(self, sys, pieces: list, c: float, horizon: int,
                 frame: _EigenData):
        self.sys = sys
        self.chart = sys.chart
        self.c = float(c)
        self.horizon = int(horizon)
        self.frame = frame
        self.pieces = pieces
        self.lengths0 = [math.hypot(p.au, p.as_) for p in pieces]
        self.total0 = float(sum(self.lengths0))
        self._pred = {}
        self._n_cache = {}
        self._sub = {}
        self._analytic = self._single_thresholds() if len(pieces) == 1 else None

    @property
    def is_singleton(self) -> bool:
        return self.total0 <= 0.0

    # piece geometry at iterate e

    def _plen(self, p: _Piece, e: int) -> float:
        return math.hypot(p.au * (self.frame.su ** e),
                          p.as_ * (self.frame.ss ** e))

    def _pvec(self, p: _Piece, e: int) -> np.ndarray:
        return (p.au * (self.frame.su ** e)) * self.frame.eu \
            + (p.as_ * (self.frame.ss ** e)) * self.frame.es

    def _pstart(self, p: _Piece, e: int) -> np.ndarray:
        if e == 0:
            return p.s
        mp = models._mat_power(self.sys.matrix, e)
        return models._exact_linear_mod1(mp, p.s)

    def _piece_escapes(self, p: _Piece, e: int) -> bool:
        ln = self._plen(p, e)
        if not ln > self.c:
            return False
        if self.chart == TORUS:
            return True
        vec = self._pvec(p, e)
        d = vec / ln
        w0 = models._wrap1(2.0 * self._pstart(p, e))
        return _fold_escape(w0, d, self.c, 2.0 * ln - self.c, self.c)

    # whole-path diameter predicate at iterate e

    def predicate(self, e: int) -> bool:
        got = self._pred.get(e)
        if got is not None:
            return got
        val = self._predicate_raw(e)
        self._pred[e] = val
        return val

    def _predicate_raw(self, e: int) -> bool:
        lens = [self._plen(p, e) for p in self.pieces]
        for p, ln in zip(self.pieces, lens):
            if ln > self.c and self._piece_escapes(p, e):
                return True
        total = float(sum(lens))
        if total <= self.c:
            return False
        if len(self.pieces) == 1:
            # single piece, over c in length, fold-suppressed
            return False
        # connect piece starts into one cover picture
        nodes = [self._pstart(self.pieces[0], e)]
        for p, ln in zip(self.pieces, lens):
            nodes.append(nodes[-1] + self._pvec(p, e))
        nodes = np.array(nodes)
        if total < 0.5:
            if self.chart == TORUS:
                d = nodes[:, None, :] - nodes[None, :, :]
                return float(np.hypot(d[..., 0], d[..., 1]).max()) > self.c
            dq = chart_distance_arr(self.chart, nodes[:, None, :], nodes[None, :, :])
            return float(dq.max()) > self.c
        # long multi-piece path: sampled lower bound of the diameter
        samples = []
        base = nodes[0]
        for p, ln, node in zip(self.pieces, lens, nodes[:-1]):
            n = min(max(2, int(ln / 0.02) + 1), 512)
            t = np.linspace(0.0, 1.0, n)
            samples.append(node[None, :] + t[:, None] * self._pvec(p, e)[None, :])
        pts = np.concatenate(samples)
        if len(pts) > 2048:
            pts = pts[:: len(pts) // 2048 + 1]
        best = 0.0
        for i in range(0, len(pts), 256):
            blk = pts[i:i + 256]
            dq = chart_distance_arr(self.chart, blk[:, None, :], pts[None, :, :])
            best = max(best, float(dq.max()))
            if best > self.c:
                return True
        return best > self.c

    # escape times

    def _single_thresholds(self):
        """Length-escape exponent thresholds for a one-piece path.

        The iterated length is log-convex in e, so {e : length > c} is
        (-inf, e_back] + [e_fwd, inf).  Returns ("always", None, None) when
        the length exceeds c at every iterate, else ("split", e_back, e_fwd)
        with None for a tail that never escapes.  On the torus length
        escape is exactly diameter escape; quotient fold suppression is
        re-verified at use time.
        """
        if self.is_singleton or len(self.pieces) != 1:
            return None
        p = self.pieces[0]
        lu, ls = abs(self.frame.su), abs(self.frame.ss)

        def ln_at(e):
            try:
                return math.hypot(p.au * (lu ** e), p.as_ * (ls ** e))
            except OverflowError:
                return INFINITY

        if p.au != 0 and p.as_ != 0:
            # integer exponents bracketing the length minimum
            estar = math.log((abs(p.as_) * math.log(1.0 / ls))
                             / (abs(p.au) * math.log(lu))) / math.log(lu / ls)
            lo, hi = int(math.floor(estar)), int(math.floor(estar)) + 1
            if min(ln_at(lo), ln_at(hi)) > self.c:
                return ("always", None, None)
            e = hi
            while not ln_at(e) > self.c:
                e += 1
            e_fwd = e
            e = lo
            while not ln_at(e) > self.c:
                e -= 1
            e_back = e
            return ("split", e_back, e_fwd)
        if p.au != 0:  # pure expanding: escapes forward only
            e = int(math.ceil(math.log(self.c / abs(p.au)) / math.log(lu))) - 2
            while not ln_at(e) > self.c:
                e += 1
            while ln_at(e - 1) > self.c:
                e -= 1
            return ("split", None, e)
        # pure contracting: escapes backward only
        e = int(math.floor(math.log(self.c / abs(p.as_)) / math.log(ls))) + 2
        while not ln_at(e) > self.c:
            e -= 1
        while ln_at(e + 1) > self.c:
            e += 1
        return ("split", e, None)

    def _in_length_set(self, e: int) -> bool:
        mode, e_back, e_fwd = self._analytic
        if mode == "always":
            return True
        return (e_back is not None and e <= e_back) or \
            (e_fwd is not None and e >= e_fwd)

    def escape_from(self, shift: int):
        """N(f^shift C): min |j| with diam(f^(shift+j) C) > c; inf if none
        found within the horizon."""
        if self.is_singleton:
            return INFINITY
        got = self._n_cache.get(shift)
        if got is not None:
            return got
        val = self._escape_raw(shift)
        self._n_cache[shift] = val
        return val

    def _escape_raw(self, shift: int):
        if self._analytic is not None and self.chart == TORUS:
            mode, e_back, e_fwd = self._analytic
            if mode == "always":
                return 0
            cands = []
            if e_fwd is not None:
                cands.append(max(0, e_fwd - shift))
            if e_back is not None:
                cands.append(max(0, shift - e_back))
            n = min(cands) if cands else INFINITY
            return n if n <= self.horizon else INFINITY
        if self._analytic is not None:
            # quotient single piece: ring scan skipping exponents whose
            # length cannot exceed c; the fold check runs only inside tails
            for j in range(self.horizon + 1):
                if self._in_length_set(shift + j) and self.predicate(shift + j):
                    return j
                if j and self._in_length_set(shift - j) and self.predicate(shift - j):
                    return j
            return INFINITY
        for j in range(self.horizon + 1):
            if self.predicate(shift + j):
                return j
            if j and self.predicate(shift - j):
                return j
        return INFINITY

    # sub-paths over a param window [a, b] (path params by cover length)

    def _param_locate(self, t: float):
        target = t * self.total0
        acc = 0.0
        for i, ln in enumerate(self.lengths0):
            if target <= acc + ln or i == len(self.lengths0) - 1:
                loc = 0.0 if ln == 0 else (target - acc) / ln
                return i, min(max(loc, 0.0), 1.0)
            acc += ln
        return len(self.lengths0) - 1, 1.0

    def sub_engine(self, a: float, b: float) -> "_PathEngine":
        key = (a, b)
        got = self._sub.get(key)
        if got is not None:
            return got
        ia, ta = self._param_locate(a)
        ib, tb = self._param_locate(b)
        pieces = []
        for i in range(ia, ib + 1):
            p = self.pieces[i]
            t0 = ta if i == ia else 0.0
            t1 = tb if i == ib else 1.0
            if t1 <= t0:
                continue
            s = p.s + t0 * self._pvec(p, 0)
            pieces.append(_Piece(np.asarray(models._wrap1(s)),
                                 (t1 - t0) * p.au, (t1 - t0) * p.as_))
        eng = _PathEngine(self.sys, pieces, self.c, self.horizon, self.frame)
        self._sub[key] = eng
        return eng


def _make_engine(sys, cont: MarkedContinuum, c: float, horizon: int) -> _PathEngine:
    if sys.kind == NORTH_SOUTH:
        raise ModelCapabilityError("the metric pipeline needs a toral model; "
                                   "the north-south map fails calibration")
    if cont.chart != sys.chart:
        raise models.ChartError(f"continuum chart {cont.chart!r} does not match "
                                f"model {sys.chart!r}")
    frame = _EigenData(sys)
    pieces = [] if cont.is_singleton else _pieces_of(sys, cont, frame)
    return _PathEngine(sys, pieces, c, horizon, frame)


class MetricEvaluator:
    """Shared-cache evaluator of the whole pipeline for one continuum."""

    def __init__(self, sys, cont: MarkedContinuum, consts: MetricConstants,
                 depth: int = 4):
        self.consts = consts
        self.depth = int(depth)
        self.engine = _make_engine(sys, cont, consts.c, consts.horizon)
        if cont.params is not None:
            tp = float(cont.params[cont.mark_p])
            tq = float(cont.params[cont.mark_q])
            span = float(cont.params[-1] - cont.params[0])
            if span > 0:
                tp = (tp - float(cont.params[0])) / span
                tq = (tq - float(cont.params[0])) / span
        else:
            # cumulative-length params of the marked vertices
            v = cont.vertices
            if len(v) > 1:
                steps = chart_distance_arr(cont.chart, v[:-1], v[1:])
                cum = np.concatenate([[0.0], np.cumsum(steps)])
                tot = cum[-1] if cum[-1] > 0 else 1.0
                tp = float(cum[cont.mark_p] / tot)
                tq = float(cum[cont.mark_q] / tot)
            else:
                tp = tq = 0.0
        self.tp, self.tq = min(tp, tq), max(tp, tq)
        self._chain = {}
        self._window = {}

    def escape(self, shift: int = 0):
        return self.engine.escape_from(shift)

    def rho(self, shift: int = 0) -> float:
        n = self.engine.escape_from(shift)
        if n is INFINITY or n >= self.consts.horizon:
            return 0.0
        return self.consts.alpha ** (-n)

    def _rho_block(self, shift: int, a: float, b: float) -> float:
        if a == 0.0 and b == 1.0:
            return self.rho(shift)
        eng = self.engine.sub_engine(a, b)
        n = eng.escape_from(shift)
        if n is INFINITY or n >= self.consts.horizon:
            return 0.0
        return self.consts.alpha ** (-n)

    def chain(self, shift: int = 0) -> float:
        got = self._chain.get(shift)
        if got is not None:
            return got
        val = self._chain_raw(shift)
        self._chain[shift] = val
        return val

    def _chain_raw(self, shift: int) -> float:
        if self.engine.is_singleton:
            return 0.0
        g = 2 ** self.depth
        full = self._rho_block(shift, 0.0, 1.0)
        if g == 1:
            return full
        eps = 1e-12
        tp, tq = self.tp, self.tq
        best = {}
        for j in range(1, g + 1):
            if j / g >= tp - eps:
                best[j] = self._rho_block(shift, 0.0, j / g)
        for j in range(2, g + 1):
            for i in range(1, j):
                bi = best.get(i)
                if bi is None:
                    continue
                cand = bi + self._rho_block(shift, i / g, j / g)
                if j not in best or cand < best[j]:
                    best[j] = cand
        ans = full
        for i, bi in best.items():
            if i == g:
                if tq >= 1.0 - eps:
                    ans = min(ans, bi)
            elif i / g <= tq + eps:
                ans = min(ans, bi + self._rho_block(shift, i / g, 1.0))
        return ans

    def window(self, shift: int = 0) -> float:
        got = self._window.get(shift)
        if got is not None:
            return got
        n0 = self.consts.n0
        lam = self.consts.lam
        val = max(self.chain(shift + i) / lam ** abs(i)
                  for i in range(-(n0 - 1), n0))
        self._window[shift] = val
        return val

    def metric_profile(self, base_shift: int = 0) -> dict:
        lam = self.consts.lam
        if self.engine.is_singleton:
            return {"D": 0.0, "achieved_index": 0, "tail_bound": 0.0,
                    "truncated": False}
        best = 0.0
        arg = 0
        truncated = True
        tail = lam ** (-self.consts.horizon)
        for j in range(self.consts.horizon + 1):
            for i in ((j,) if j == 0 else (j, -j)):
                term = self.window(base_shift + i) / lam ** j
                if term > best:
                    best, arg = term, i
            if lam ** (-(j + 1)) <= best:
                truncated = False
                tail = 0.0
                break
        return {"D": best, "achieved_index": arg, "tail_bound": tail,
                "truncated": truncated}

    def metric(self, base_shift: int = 0) -> float:
        return self.metric_profile(base_shift)["D"]


# -- public operations -----------------------------------------------------


def escape_time(sys, cont: MarkedContinuum, consts: MetricConstants):
    """N(C): iterates needed for the diameter to exceed c.

    math.inf for singletons; the value ``consts.horizon`` is a sentinel
    meaning ">= horizon" (effective infinity for the pipeline).
    """
    eng = _make_engine(sys, cont, consts.c, consts.horizon)
    n = eng.escape_from(0)
    return consts.horizon if n is INFINITY and not eng.is_singleton else n


def escape_weight(sys, cont: MarkedContinuum, consts: MetricConstants) -> float:
    """rho(C) = alpha^(-N(C)); 0 at or beyond the horizon."""
    return MetricEvaluator(sys, cont, consts).rho(0)


def chain_weight(sys, cont: MarkedContinuum, consts: MetricConstants,
                 depth: int = 4) -> float:
    """Dyadic-chain upper approximation of P(C_(p,q)).

    Monotone non-increasing in depth; always within [rho/4, rho].
    """
    return MetricEvaluator(sys, cont, consts, depth).chain(0)


def window_weight(sys, cont: MarkedContinuum, consts: MetricConstants,
                  depth: int = 4) -> float:
    """D'(C): the (2 n0 - 1)-iterate window max of lam-discounted chain weights."""
    return MetricEvaluator(sys, cont, consts, depth).window(0)


def cw_metric(sys, cont: MarkedContinuum, consts: MetricConstants,
              depth: int = 4) -> float:
    """D(C): the self-similar metric value (truncated sup, exact stop rule)."""
    return MetricEvaluator(sys, cont, consts, depth).metric(0)


def cw_metric_profile(sys, cont: MarkedContinuum, consts: MetricConstants,
                      depth: int = 4) -> dict:
    """Full pipeline record {N, rho, P, Dprime, D, achieved_index, tail_bound}."""
    ev = MetricEvaluator(sys, cont, consts, depth)
    prof = ev.metric_profile(0)
    n = ev.escape(0)
    prof.update({
        "N": (consts.horizon if n is INFINITY and not ev.engine.is_singleton else n),
        "rho": ev.rho(0),
        "P": ev.chain(0),
        "Dprime": ev.window(0),
        "depth": int(depth),
    })
    return prof


def cw_metric_family(sys, cont: MarkedContinuum, consts: MetricConstants,
                     shifts, depth: int = 4) -> dict:
    """D(f^j C) for each j in shifts, sharing all internal caches."""
    ev = MetricEvaluator(sys, cont, consts, depth)
    return {int(j): ev.metric(int(j)) for j in shifts}


# -- calibration ------------------------------------------------------------


def _eigen_arc_samples(sys, c: float, budget: int, rng) -> list:
    """Stable/unstable arc sample family with diameters in (c/2, c]."""
    from .continua import StraightLift

    lens = [0.505 * c, 0.75 * c, 0.999 * c]
    samples = []
    grid = [i / 8.0 for i in range(8)]
    for stable in (True, False):
        e = sys.eigen_direction(stable=stable)
        for gx in grid:
            for gy in grid:
                samples.append((np.array([gx, gy]), stable, 0.75 * c, True))
        if sys.chart == SPHERE_QUOTIENT:
            for sx, sy in ((0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)):
                for ln in lens:
                    samples.append((np.array([sx, sy]), stable, ln, False))
                    for off in (1e-3, 1e-2, 0.1):
                        samples.append((np.array([sx + off, sy + off * 0.7]),
                                        stable, ln, True))
    while len(samples) < budget:
        xy = rng.uniform(0.0, 1.0, size=2)
        stable = bool(rng.integers(0, 2))
        ln = float(rng.uniform(0.505 * c, 0.999 * c))
        samples.append((xy, stable, ln, True))
    if len(samples) > budget:
        idx = rng.choice(len(samples), size=budget, replace=False)
        samples = [samples[i] for i in sorted(idx)]
    lifts = []
    for xy, stable, ln, two_sided in samples:
        e = sys.eigen_direction(stable=stable)
        start = xy - (ln / 2.0) * e if two_sided else xy
        lifts.append(StraightLift(start=tuple(start), direction=tuple(e),
                                  length=ln, chart=sys.chart, stable=stable))
    return lifts


def _ns_samples(c: float, budget: int, rng) -> list:
    """Meridian colat windows (lon, t0, t1) with diameters in (c/2, c]."""
    samples = []
    for t0 in np.linspace(0.0, 1.0 - c, 25):
        for span in (0.55 * c, 0.8 * c, c):
            if t0 + span <= 1.0:
                samples.append((0.0, float(t0), float(t0 + span)))
    while len(samples) < budget:
        span = float(rng.uniform(0.505 * c, c))
        t0 = float(rng.uniform(0.0, 1.0 - span))
        samples.append((float(rng.uniform(0, 1)), t0, t0 + span))
    return samples[:budget]


def _ns_colat(t: float, n: int) -> float:
    p = 2.0 ** n
    return p * t / (1.0 + (p - 1.0) * t)


def calibrate(sys, c: float | None = None, sample_budget: int = 400,
              seed: int = 0, max_m: int | None = None) -> MetricConstants:
    """Find the escape bound m on a sampled continuum family and derive
    the metric constants.

    m is the smallest integer such that every sampled continuum with
    diameter above c/2 reaches diameter above c within m iterates (either
    direction).  A sample that never escapes within the scan window is a
    counterexample certificate: calibration fails and the witness is
    attached to the raised error.
    """
    c = float(sys.c if c is None else c)
    if not 0.0 < c < MAX_C:
        raise ValueError(f"c must lie in (0, {MAX_C}) at chart scale, got {c}")
    if max_m is None:
        max_m = sys.horizon
    rng = np.random.default_rng(seed)
    scan = max_m + 40
    if sys.kind == NORTH_SOUTH:
        worst = None
        for lon, t0, t1 in _ns_samples(c, sample_budget, rng):
            sup = 0.0
            for n in range(-scan, scan + 1):
                sup = max(sup, _ns_colat(t1, n) - _ns_colat(t0, n))
            if sup <= c:
                # spans shrink monotonically toward both poles, so the
                # scanned window bounds the true sup
                worst = {"kind": "meridian-arc", "lon": lon,
                         "colat": [t0, t1], "diam": t1 - t0,
                         "sup_diam": sup, "scan": scan}
                break
        if worst is None:
            worst = {"kind": "exhausted", "note": "no witness found"}
        err = CalibrationError(
            f"no escape bound m <= {max_m}: witness continuum of diameter "
            f"{worst.get('diam', 0):.4g} never exceeds c={c} "
            f"(sup {worst.get('sup_diam', 0):.4g} over |n| <= {scan})")
        err.witness = worst
        raise err
    frame = _EigenData(sys)
    m_needed = 0
    for lf in _eigen_arc_samples(sys, c, sample_budget, rng):
        d = lf.dir_arr
        if sys.chart == SPHERE_QUOTIENT:
            # membership: the family is continua with quotient diam > c/2,
            # and the fold can shrink an arc well below its plane length
            t = np.linspace(0.0, 1.0, 513)
            pts = lf.start_arr[None, :] + (t * lf.length)[:, None] * d[None, :]
            dia = float(chart_distance_arr(sys.chart, pts[:, None, :],
                                           pts[None, :, :]).max())
            if not dia > c / 2.0:
                continue
        if lf.stable:
            comp = (0.0, lf.length * math.copysign(1.0, float(d @ frame.es)))
        else:
            comp = (lf.length * math.copysign(1.0, float(d @ frame.eu)), 0.0)
        eng = _PathEngine(sys, [_Piece(lf.start_arr, *comp)], c, scan, frame)
        n = eng.escape_from(0)
        if n is INFINITY or n > max_m:
            err = CalibrationError(
                f"sample arc (len {lf.length:.4g}) needs more than m={max_m} "
                f"iterates to escape c={c}")
            err.witness = {"kind": "eigen-arc", "stable": lf.stable,
                           "start": list(lf.start), "length": lf.length,
                           "escape_time": None if n is INFINITY else int(n)}
            raise err
        m_needed = max(m_needed, int(n))
    return constants_for(c, max(m_needed, 1))
