"""Segment search: exact 1-D case table, brute-force reference, bisection.

The segment-search prox jointly minimizes F(x) + H d_{p+1}(x - xbar - tau*u)
over x and tau in [0, 1].  The closed-form case table covers the canonical
1-D instance; the reference oracle certifies it by grid scan + polish; the
bisection scheme produces the bracketing segment data the inexact driver
consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .acceptance import AcceptedPoint
from .config import DEFAULT_CAPS, DEFAULT_TOL, BisectionStall, SolveCaps, Tolerances
from .lower import RelSmoothParams, solve_acceptable
from .numerics import power_mean_norm
from .problems import ProblemInstance, QuadraticOracle, SeparableOracle


@dataclass
class SproxResult:
    x_plus: np.ndarray
    tau_plus: float
    g_plus: float | None
    branch: str
    objective: float


def _example_objective(x, xbar, tau, ubar):
    m = xbar + tau * ubar
    return 0.5 * x * x + abs(x) + 0.25 * (x - m) ** 4


def exact_sprox_1d(xbar: float, ubar: float) -> SproxResult:
    """Case-table segment-search prox for F(x) = x^2/2 + |x|, p = 3, H = 1.

    Candidates: the zero point on the interior of the segment (objective 0),
    and per endpoint the stationary roots of x +- 1 + (x - m)^3 = 0 with the
    matching sign, plus x = 0 with subgradient m^3 when |m| <= 1.  The winner
    minimizes the joint objective.
    """
    xbar = float(xbar)
    ubar = float(ubar)
    candidates = []  # (x, tau, g, branch)
    if ubar != 0.0:
        ti = -xbar / ubar
        if 0.0 < ti < 1.0:
            candidates.append((0.0, ti, 0.0, "interior"))
    for tau, tag in ((0.0, "tau0"), (1.0, "tau1")):
        m = xbar + tau * ubar
        # x > 0, g = +1:  x + 1 + (x - m)^3 = 0
        pos = np.roots([1.0, -3.0 * m, 3.0 * m * m + 1.0, 1.0 - m ** 3])
        for r in pos:
            if abs(r.imag) < 1e-10 and r.real > 1e-12:
                candidates.append((float(r.real), tau, 1.0, f"{tag}_pos"))
        # x < 0, g = -1:  x - 1 + (x - m)^3 = 0
        neg = np.roots([1.0, -3.0 * m, 3.0 * m * m + 1.0, -1.0 - m ** 3])
        for r in neg:
            if abs(r.imag) < 1e-10 and r.real < -1e-12:
                candidates.append((float(r.real), tau, -1.0, f"{tag}_neg"))
        if abs(m) <= 1.0:
            side = "pos" if m >= 0.0 else "neg"
            candidates.append((0.0, tau, m ** 3, f"{tag}_{side}"))
    best = min(candidates,
               key=lambda c: _example_objective(c[0], xbar, c[1], ubar))
    x, tau, g, branch = best
    return SproxResult(np.array([x]), tau, g, branch,
                       _example_objective(x, xbar, tau, ubar))


def _monotone_root(phi, lo: float, hi: float, iters: int = 200) -> float:
    """Root of a strictly increasing scalar function on a bracketing interval."""
    flo, fhi = phi(lo), phi(hi)
    while flo > 0.0:
        lo -= (hi - lo) + 1.0
        flo = phi(lo)
    while fhi < 0.0:
        hi += (hi - lo) + 1.0
        fhi = phi(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if phi(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def exact_sprox_1d_general(xbar: float, ubar: float, H: float, p: int,
                           weight: float = 1.0) -> SproxResult:
    """Segment-search prox of F(x) = x^2/2 + weight*|x| for arbitrary H, p.

    Same candidate structure as the cubic case table, with the signed
    stationarity equations x +- weight + H|x - m|^{p-1}(x - m) = 0 solved by
    monotone bisection instead of closed-form roots.
    """
    xbar, ubar, H = float(xbar), float(ubar), float(H)

    def objective(x, tau):
        m = xbar + tau * ubar
        return 0.5 * x * x + weight * abs(x) + H * abs(x - m) ** (p + 1) / (p + 1)

    candidates = []
    if ubar != 0.0:
        ti = -xbar / ubar
        if 0.0 < ti < 1.0:
            candidates.append((0.0, ti, 0.0, "interior"))
    for tau, tag in ((0.0, "tau0"), (1.0, "tau1")):
        m = xbar + tau * ubar

        def phi(x, s):
            return x + s * weight + H * abs(x - m) ** (p - 1) * (x - m)

        span = abs(m) + weight + 1.0
        xp = _monotone_root(lambda x: phi(x, 1.0), 0.0, span)
        if xp > 1e-12:
            candidates.append((xp, tau, weight, f"{tag}_pos"))
        xn = _monotone_root(lambda x: phi(x, -1.0), -span, 0.0)
        if xn < -1e-12:
            candidates.append((xn, tau, -weight, f"{tag}_neg"))
        g0 = H * abs(m) ** (p - 1) * m
        if abs(g0) <= weight:
            side = "pos" if m >= 0.0 else "neg"
            candidates.append((0.0, tau, g0, f"{tag}_{side}"))
    best = min(candidates, key=lambda c: objective(c[0], c[1]))
    x, tau, g, branch = best
    return SproxResult(np.array([x]), tau, g, branch, objective(x, tau))


def sprox_quadratic(instance: ProblemInstance, xbar: np.ndarray, u: np.ndarray,
                    H: float, p: int) -> tuple[np.ndarray, float, np.ndarray]:
    """Exact segment-search prox for a quadratic f with psi = 0, identity metric.

    Inner problem at anchor m: (Q + H r^{p-1} I) h = -(Q m - c) with the
    radial root r = ||h||, solved on the eigenbasis of Q; the outer tau
    minimization on [0, 1] is convex and handled by golden section.
    """
    sm = instance.smooth
    if instance.simple.kind != "zero" or not instance.metric.is_identity:
        raise ValueError("sprox_quadratic needs psi = 0 and the identity metric")
    if not isinstance(sm, QuadraticOracle):
        raise ValueError("sprox_quadratic needs a quadratic smooth part")
    evals, evecs = np.linalg.eigh(sm.Q)

    def inner(m):
        rhs = evecs.T @ (sm.Q @ m - sm.c)

        def norm_h(r):
            return float(np.linalg.norm(rhs / (evals + H * r ** (p - 1))))

        r_hi = max(norm_h(0.0) if np.all(evals > 0) else 1.0, 1e-12)
        while norm_h(r_hi) > r_hi:
            r_hi *= 2.0
        r_lo = 0.0
        for _ in range(120):
            r_mid = 0.5 * (r_lo + r_hi)
            if norm_h(r_mid) > r_mid:
                r_lo = r_mid
            else:
                r_hi = r_mid
        r = 0.5 * (r_lo + r_hi)
        h = -(evecs @ (rhs / (evals + H * r ** (p - 1))))
        x = m + h
        val = sm.value(x) + H * np.linalg.norm(h) ** (p + 1) / (p + 1)
        return x, val

    def tau_obj(tau):
        return inner(xbar + tau * u)[1]

    if float(u @ u) == 0.0:
        tau = 0.0
    else:
        tau, _ = _golden_scalar(tau_obj, 0.0, 1.0, iters=90)
        # convex in tau: keep the better endpoint if the polish sits near one
        for t_end in (0.0, 1.0):
            if tau_obj(t_end) <= tau_obj(tau):
                tau = t_end
    x, _ = inner(xbar + tau * u)
    return x, float(tau), np.zeros(instance.dim)


def make_sprox_oracle(instance: ProblemInstance, H: float, p: int):
    """Pick the exact segment-search oracle matching the instance structure."""
    sm = instance.smooth
    if (instance.dim == 1 and isinstance(sm, QuadraticOracle)
            and sm.Q[0, 0] == 1.0 and sm.c[0] == 0.0
            and instance.simple.kind == "l1"):
        w = instance.simple.weight
        if p == 3 and H == 1.0 and w == 1.0:
            def oracle(xbar, u):
                res = exact_sprox_1d(xbar[0], u[0])
                return res.x_plus, res.tau_plus, np.array([res.g_plus])
        else:
            def oracle(xbar, u):
                res = exact_sprox_1d_general(xbar[0], u[0], H, p, weight=w)
                return res.x_plus, res.tau_plus, np.array([res.g_plus])
        return oracle
    if instance.simple.kind == "zero" and isinstance(sm, QuadraticOracle) \
            and instance.metric.is_identity:
        return lambda xbar, u: sprox_quadratic(instance, xbar, u, H, p)
    raise ValueError(f"no exact segment-search oracle for {instance.name!r}")


# ---------------------------------------------------------------------------
# brute-force reference oracle
# ---------------------------------------------------------------------------

def _vectorized_1d(instance: ProblemInstance):
    """Elementwise objective F(x) for a 1-D instance, over an array of x."""
    sm = instance.smooth
    if isinstance(sm, QuadraticOracle):
        q = sm.Q[0, 0]
        c0 = sm.c[0]

        def fval(x):
            return 0.5 * q * x * x - c0 * x
    elif isinstance(sm, SeparableOracle):
        a_col = sm.A[:, 0]
        b = sm.b
        deriv, open_domain = sm.deriv, sm.open_domain

        def fval(x):
            t = np.multiply.outer(x, a_col) - b
            if open_domain:
                bad = np.any(t <= 0.0, axis=-1)
                t = np.where(t > 0.0, t, 1.0)
                out = np.sum(deriv(t, 0), axis=-1)
                return np.where(bad, np.inf, out)
            return np.sum(deriv(t, 0), axis=-1)
    else:  # pragma: no cover - all shipped oracles are handled above
        raise NotImplementedError("unsupported smooth oracle for 1-D reference")

    psi = instance.simple
    if psi.kind == "zero":
        pval = lambda x: 0.0
    elif psi.kind == "l1":
        w = psi.weight
        pval = lambda x: w * np.abs(x)
    else:
        lo, hi = psi.lo[0], psi.hi[0]
        pval = lambda x: np.where((x >= lo - 1e-12) & (x <= hi + 1e-12), 0.0, np.inf)

    return lambda x: fval(x) + pval(x)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min_vec(obj, lo, hi, iters=110):
    """Vectorized golden-section minimization over per-element brackets."""
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = obj(c)
    fd = obj(d)
    for _ in range(iters):
        take_left = fc <= fd
        b = np.where(take_left, d, b)
        a = np.where(take_left, a, c)
        c = b - _INV_PHI * (b - a)
        d = a + _INV_PHI * (b - a)
        fc = obj(c)
        fd = obj(d)
    x = 0.5 * (a + b)
    return x, obj(x)


def _inner_min_1d(instance, anchors, H, p):
    """Minimize F(x) + H|x - m|^{p+1}/(p+1) for every anchor m, vectorized."""
    F = _vectorized_1d(instance)
    m = np.asarray(anchors, dtype=float)

    def total(x):
        return F(x) + H * np.abs(x - m) ** (p + 1) / (p + 1)

    # level-set bracket: H d(T - m) <= F(base) + H d(base - m) - F_lb
    span_lo = float(np.min(m)) - 5.0
    span_hi = float(np.max(m)) + 5.0
    sample = np.linspace(span_lo, span_hi, 4001)
    fs = F(sample)
    x_best = float(sample[np.argmin(fs)])
    F_lb = (instance.F_star if instance.F_star is not None
            else float(np.min(fs)) - 1e-9)
    Fm = F(m)
    base = np.where(np.isfinite(Fm), m, x_best)
    base_val = total(base)
    R = ((p + 1) * np.maximum(base_val - F_lb, 0.0) / H) ** (1.0 / (p + 1)) + 1e-6
    R = R + np.abs(base - m)
    for _ in range(8):
        lo, hi = m - R, m + R
        if instance.simple.kind == "box":
            lo = np.maximum(lo, instance.simple.lo[0])
            hi = np.minimum(hi, instance.simple.hi[0])
        x, val = _golden_min_vec(total, lo, hi)
        near_edge = (np.minimum(x - lo, hi - x) < 1e-3 * R) & (val > F_lb + 1e-12)
        if not np.any(near_edge):
            break
        R = np.where(near_edge, 4.0 * R, R)
    return x, val


def sprox_reference(instance: ProblemInstance, xbar: np.ndarray, u: np.ndarray,
                    H: float, p: int, grid_tau: int = 10000,
                    inner_tol: float = 1e-10) -> tuple[np.ndarray, float, float]:
    """Grid-scan + golden-polish minimization of the segment-search objective.

    Scans tau on a uniform grid, solves the inner x-problem at each tau, then
    polishes tau by golden section around the best cell.  Desk-scale guardrails:
    dim <= 5, grid_tau <= 10^4.
    """
    if instance.dim > 5:
        raise ValueError("sprox_reference is limited to dim <= 5")
    if grid_tau > 10 ** 4:
        raise ValueError("grid_tau capped at 10^4")
    xbar = np.asarray(xbar, dtype=float)
    u = np.asarray(u, dtype=float)
    taus = np.linspace(0.0, 1.0, grid_tau + 1)

    if instance.dim == 1:
        anchors = xbar[0] + taus * u[0]
        xs, vals = _inner_min_1d(instance, anchors, H, p)
        j = int(np.argmin(vals))

        def tau_obj(tau):
            m = np.atleast_1d(xbar[0] + tau * u[0])
            _, v = _inner_min_1d(instance, m, H, p)
            return float(v[0])

        lo_t = taus[max(j - 1, 0)]
        hi_t = taus[min(j + 1, grid_tau)]
        tau, val = _golden_scalar(tau_obj, lo_t, hi_t)
        m = np.atleast_1d(xbar[0] + tau * u[0])
        x, v = _inner_min_1d(instance, m, H, p)
        if v[0] <= vals[j]:
            return np.array([x[0]]), float(tau), float(v[0])
        return np.array([xs[j]]), float(taus[j]), float(vals[j])

    # generic low-dimensional path: near-exact lower-level solve per tau
    params = RelSmoothParams(xi=2.0, H=H, mu=0.5, L=1.5, kappa=1.0 / 3.0)

    def solve_at(tau):
        anchor = xbar + tau * u
        ap, _ = solve_acceptable(instance, anchor, H, p, beta=1e-8, params=params)
        dval = instance.metric.norm(ap.T - anchor) ** (p + 1) / (p + 1)
        return ap.T, instance.F(ap.T) + H * dval

    best_x, best_val, best_j = None, math.inf, 0
    for j, tau in enumerate(taus):
        xT, val = solve_at(tau)
        if val < best_val:
            best_x, best_val, best_j = xT, val, j
    lo_t = taus[max(best_j - 1, 0)]
    hi_t = taus[min(best_j + 1, grid_tau)]
    tau, val = _golden_scalar(lambda t: solve_at(t)[1], lo_t, hi_t, iters=60)
    if val < best_val:
        xT, val = solve_at(tau)
        return xT, float(tau), float(val)
    return best_x, float(taus[best_j]), float(best_val)


def _golden_scalar(obj, lo, hi, iters=80):
    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = obj(d)
    x = 0.5 * (a + b)
    return x, obj(x)


# ---------------------------------------------------------------------------
# bisection scheme
# ---------------------------------------------------------------------------

@dataclass
class SegmentResult:
    tau1: float
    tau2: float
    T1: AcceptedPoint
    T2: AcceptedPoint
    beta1: float
    beta2: float
    alpha: float
    g_k: float
    bisections: int
    lower_iters: int = 0


def bisect_segment(instance: ProblemInstance, x_k: np.ndarray, u_k: np.ndarray,
                   end0: AcceptedPoint, end1: AcceptedPoint, H: float, p: int,
                   beta: float, params: RelSmoothParams,
                   caps: SolveCaps = DEFAULT_CAPS,
                   tol: Tolerances = DEFAULT_TOL,
                   collect=None) -> SegmentResult:
    """Bracketing bisection on the directional products along the segment.

    Maintains tau1 < tau2 with beta1 <= 0 <= beta2; each halving solves the
    prox subproblem at the midpoint anchor and keeps the side whose sign
    matches.  Terminates when the weighted product drops below the driver's
    coefficient threshold (evaluated with the current bracket's g_k).
    """
    x_k = np.asarray(x_k, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    tau1, tau2 = 0.0, 1.0
    T1, T2 = end0, end1
    beta1 = float(T1.composite_grad() @ u_k)
    beta2 = float(T2.composite_grad() @ u_k)
    if not (beta1 < 0.0 < beta2):
        raise ValueError("bisection requires beta1 < 0 < beta2 at the endpoints")
    lower_total = 0
    threshold_c = 0.5 * ((1.0 - beta) / H) ** (1.0 / p)
    for i in range(caps.bisections + 1):
        alpha = beta2 / (beta2 - beta1)
        g_k = power_mean_norm(alpha, T1.grad_F_norm, T2.grad_F_norm, p)
        lhs = alpha * (tau2 - tau1) * (-beta1)
        rhs = threshold_c * g_k ** ((p + 1) / p)
        if lhs <= rhs:
            return SegmentResult(tau1, tau2, T1, T2, beta1, beta2, alpha, g_k,
                                 bisections=i, lower_iters=lower_total)
        tau_mid = 0.5 * (tau1 + tau2)
        anchor = x_k + tau_mid * u_k
        ap, iters = solve_acceptable(instance, anchor, H, p, beta, params,
                                     caps=caps, tol=tol)
        lower_total += iters
        if collect is not None:
            collect(ap)
        b_mid = float(ap.composite_grad() @ u_k)
        if b_mid <= 0.0:
            tau1, T1, beta1 = tau_mid, ap, b_mid
        else:
            tau2, T2, beta2 = tau_mid, ap, b_mid
    raise BisectionStall("bisection stall")
