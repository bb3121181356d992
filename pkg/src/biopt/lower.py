"""Bregman composite-gradient lower level.

The scaling function is the truncated even-order Taylor expansion of the
smooth part at the prox center plus H d_{p+1}; the regularized objective is
relatively smooth and relatively strongly convex with respect to it, which
makes the non-Euclidean composite gradient loop linearly convergent and lets
it emit certified acceptable solutions of the prox subproblem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .acceptance import AcceptedPoint, reg_value_grad
from .config import (DEFAULT_CAPS, DEFAULT_TOL, AcceptanceFailure,
                     OptimalityReached, SolveCaps, SubproblemStall, Tolerances)
from .numerics import prox_power
from .problems import ProblemInstance, SimpleOracle


@dataclass(frozen=True)
class RelSmoothParams:
    """Relative smoothness/strong-convexity constants of f^p w.r.t. rho."""

    xi: float
    H: float
    mu: float
    L: float
    kappa: float


def rel_smooth_params(p: int, M_next: float) -> RelSmoothParams:
    """Constants for the canonical choice xi = 2.

    H = 6 M_{p+1}(f) / (p-1)!, so xi (1 + xi) = (p-1)! H / M_{p+1} holds
    exactly; then mu = 1/2, L = 3/2, kappa = 1/3.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if M_next <= 0:
        raise ValueError("M_next must be > 0")
    H = 6.0 * M_next / math.factorial(p - 1)
    return RelSmoothParams(xi=2.0, H=H, mu=0.5, L=1.5, kappa=1.0 / 3.0)


class ScalingFunction:
    """rho_{y,H}(x) = sum_{k=1..q} D^{2k} f(y)[x-y]^{2k} / (2k)! + H d_{p+1}(x-y)."""

    def __init__(self, instance: ProblemInstance, y: np.ndarray, H: float, p: int):
        self.instance = instance
        self.y = np.asarray(y, dtype=float)
        self.H = float(H)
        self.p = int(p)
        self.q = p // 2

    def value_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        h = np.asarray(x, dtype=float) - self.y
        dval, dgrad = prox_power(self.instance.metric, h, self.p)
        val = self.H * dval
        grad = self.H * dgrad
        for k in range(1, self.q + 1):
            fac = math.factorial(2 * k)
            val += self.instance.smooth.even_form(self.y, h, 2 * k) / fac
            grad = grad + self.instance.smooth.even_form_grad(self.y, h, 2 * k) / fac
        return val, grad

    def value(self, x: np.ndarray) -> float:
        return self.value_grad(x)[0]

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.value_grad(x)[1]


def bregman(sf: ScalingFunction, x: np.ndarray, z: np.ndarray) -> float:
    """beta_rho(x, z) = rho(z) - rho(x) - <grad rho(x), z - x>; nonnegative."""
    vz, _ = sf.value_grad(z)
    vx, gx = sf.value_grad(x)
    d = np.asarray(z, dtype=float) - np.asarray(x, dtype=float)
    return vz - vx - float(gx @ d)


def reg_bregman(instance: ProblemInstance, anchor: np.ndarray, H: float,
                p: int, x: np.ndarray, z: np.ndarray) -> float:
    """Bregman distance of the regularized function f^p_{anchor,H}."""
    vz, _ = reg_value_grad(instance, anchor, H, p, z)
    vx, gx = reg_value_grad(instance, anchor, H, p, x)
    d = np.asarray(z, dtype=float) - np.asarray(x, dtype=float)
    return vz - vx - float(gx @ d)


def _shifted_smooth(sf: ScalingFunction, L: float, c_shift: np.ndarray,
                    h: np.ndarray) -> tuple[float, np.ndarray]:
    """Smooth part of the step subproblem in the shifted variable h = z - y."""
    y = sf.y
    dval, dgrad = prox_power(sf.instance.metric, h, sf.p)
    val = float(c_shift @ h) + 2.0 * L * sf.H * dval
    grad = c_shift + 2.0 * L * sf.H * dgrad
    for k in range(1, sf.q + 1):
        fac = math.factorial(2 * k)
        val += 2.0 * L * sf.instance.smooth.even_form(y, h, 2 * k) / fac
        grad = grad + 2.0 * L * sf.instance.smooth.even_form_grad(y, h, 2 * k) / fac
    return val, grad


def _radial_solve(sf: ScalingFunction, L: float, c_shift: np.ndarray) -> np.ndarray:
    """Direct solver for psi = 0, q = 1: h(r) = -(2L K + 2L H r^{p-1} B)^{-1} c
    with a monotone 1-D solve on r = ||h(r)||."""
    m = sf.instance.metric
    K = 2.0 * L * sf.instance.smooth.hessian(sf.y)
    HB = 2.0 * L * sf.H * m.B
    p = sf.p
    if p == 1:
        return -np.linalg.solve(K + HB, c_shift)

    def h_of(r: float) -> np.ndarray | None:
        try:
            return -np.linalg.solve(K + (r ** (p - 1)) * HB, c_shift)
        except np.linalg.LinAlgError:
            return None

    h0 = h_of(0.0)
    if h0 is not None and m.norm(h0) == 0.0:
        return h0
    # bracket the root of ||h(r)|| - r
    r_hi = 1.0 if h0 is None else max(m.norm(h0), 1e-12)
    for _ in range(200):
        hh = h_of(r_hi)
        if hh is not None and m.norm(hh) <= r_hi:
            break
        r_hi *= 2.0
    r_lo = 0.0
    for _ in range(120):
        r_mid = 0.5 * (r_lo + r_hi)
        hh = h_of(r_mid)
        if hh is None or m.norm(hh) > r_mid:
            r_lo = r_mid
        else:
            r_hi = r_mid
        if r_hi - r_lo <= 1e-16 * max(r_hi, 1.0):
            break
    return h_of(r_hi)


def subproblem_solve(sf: ScalingFunction, L: float, c_shift: np.ndarray,
                     psi: SimpleOracle, tol: float,
                     cap: int = DEFAULT_CAPS.inner_subproblem) -> np.ndarray:
    """Minimize <c,h> + 2L sum_k D^{2k}f(y)[h]^{2k}/(2k)! + psi(y+h) + 2LH d_{p+1}(h).

    psi = 0 with q = 1 takes the radial reduction; otherwise a backtracking
    proximal-gradient loop on the shifted objective.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    m = sf.instance.metric
    if psi.kind == "zero" and sf.q == 1:
        return _radial_solve(sf, L, c_shift)

    y = sf.y
    h = np.zeros(m.dim)
    sval, sgrad = _shifted_smooth(sf, L, c_shift, h)
    obj = sval + psi.value(y + h)
    t = 1.0
    best = h
    for _ in range(cap):
        for _ in range(80):
            w = h - t * m.solve(sgrad)
            trial = psi.scaled_prox(t, y + w, m) - y
            d = trial - h
            sval_t, _ = _shifted_smooth(sf, L, c_shift, trial)
            quad = sval + float(sgrad @ d) + m.norm(d) ** 2 / (2.0 * t)
            if sval_t <= quad + 1e-15 * (1.0 + abs(quad)):
                break
            t *= 0.5
        residual = m.norm(trial - h) / t
        h = trial
        best = h
        sval, sgrad = _shifted_smooth(sf, L, c_shift, h)
        obj = sval + psi.value(y + h)
        if residual <= tol:
            return h
    raise SubproblemStall("subproblem stall", best=best)


def solve_acceptable(instance: ProblemInstance, y: np.ndarray, H: float, p: int,
                     beta: float, params: RelSmoothParams,
                     caps: SolveCaps = DEFAULT_CAPS,
                     tol: Tolerances = DEFAULT_TOL) -> tuple[AcceptedPoint, int]:
    """Non-Euclidean composite gradient loop producing an acceptable pair.

    Starts at z0 = y; each step minimizes the Bregman-linearized model,
    recovers the constructive psi-subgradient from the step's optimality
    condition, and tests acceptance on the freshest iterate.
    """
    y = np.asarray(y, dtype=float)
    L = params.L
    sf = ScalingFunction(instance, y, H, p)
    m = instance.metric
    psi = instance.simple
    z = y.copy()
    phi_z = instance.smooth.value(z) + psi.value(z)  # d_{p+1} term is 0 at z0
    _, rho_grad_z = sf.value_grad(z)
    history = []
    for i in range(1, caps.outer_acceptance + 1):
        _, reg_grad_z = reg_value_grad(instance, y, H, p, z)
        c_shift = reg_grad_z - 2.0 * L * rho_grad_z
        subtol = max(1e-12, 1e-10 * m.dual_norm(c_shift))
        h = subproblem_solve(sf, L, c_shift, psi, subtol,
                             cap=caps.inner_subproblem)
        z_next = y + h
        # open-domain safeguard: halve toward z until feasible and nonincreasing
        for _ in range(60):
            val_next, _ = (math.inf, None) if not instance.smooth.in_domain(z_next) \
                else reg_value_grad(instance, y, H, p, z_next)
            phi_next = val_next + psi.value(z_next) if math.isfinite(val_next) else math.inf
            if phi_next <= phi_z + 1e-12 * (1.0 + abs(phi_z)):
                break
            z_next = z + 0.5 * (z_next - z)
        _, rho_grad_next = sf.value_grad(z_next)
        if psi.kind == "zero":
            g = np.zeros(m.dim)
        else:
            g = 2.0 * L * (rho_grad_z - rho_grad_next) - reg_grad_z
        _, reg_grad_next = reg_value_grad(instance, y, H, p, z_next)
        lhs = m.dual_norm(reg_grad_next + g)
        rhs = m.dual_norm(instance.smooth.grad(z_next) + g)
        history.append(lhs)
        if rhs <= 100.0 * tol.acceptance_abs:
            # composite gradient at the numerical floor: the point is optimal
            # and residual-ratio certificates would be pure roundoff
            raise OptimalityReached("anchor already optimal", point=z_next, g=g)
        if lhs <= beta * rhs + tol.acceptance_rel * rhs:
            return AcceptedPoint(instance, y, H, p, beta, z_next, g, tol=tol), i
        z = z_next
        rho_grad_z = rho_grad_next
        phi_z = phi_next
    raise AcceptanceFailure("acceptance not reached", residual_history=history)
