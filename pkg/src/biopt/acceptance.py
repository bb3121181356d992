"""Regularized function f^p_{xbar,H}, the acceptance set, and its diagnostics.

An accepted pair (T, g), g a subgradient of psi at T, is one whose
regularized composite gradient is dominated by the plain composite gradient:
||grad f^p_{xbar,H}(T) + g||_* <= beta ||grad f(T) + g||_*.
"""

from __future__ import annotations

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .numerics import prox_power
from .problems import ProblemInstance


def reg_value_grad(instance: ProblemInstance, anchor: np.ndarray, H: float,
                   p: int, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of f(x) + H d_{p+1}(x - anchor)."""
    x = np.asarray(x, dtype=float)
    dval, dgrad = prox_power(instance.metric, x - anchor, p)
    return instance.smooth.value(x) + H * dval, instance.smooth.grad(x) + H * dgrad


def is_acceptable(instance: ProblemInstance, anchor: np.ndarray, H: float,
                  p: int, beta: float, T: np.ndarray, g: np.ndarray,
                  tol: Tolerances = DEFAULT_TOL) -> bool:
    """Defining inequality of the acceptance set, with absolute + relative slack.

    The caller certifies g in partial psi(T) (constructive witness from a
    prox step or a closed form).
    """
    _, reg_grad = reg_value_grad(instance, anchor, H, p, T)
    lhs = instance.metric.dual_norm(reg_grad + g)
    rhs = instance.metric.dual_norm(instance.smooth.grad(T) + g)
    return lhs <= beta * rhs + tol.acceptance_abs + tol.acceptance_rel * rhs


class AcceptedPoint:
    """A certified acceptable solution of the prox subproblem at anchor ybar.

    Construction asserts the defining inequality and the first-order
    consequences (the two-sided residual bracket and the descent inner
    product); an AcceptedPoint that exists is always valid.
    """

    def __init__(self, instance: ProblemInstance, anchor: np.ndarray, H: float,
                 p: int, beta: float, T: np.ndarray, g: np.ndarray,
                 tol: Tolerances = DEFAULT_TOL):
        self._instance = instance
        self.T = np.asarray(T, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.anchor = np.asarray(anchor, dtype=float)
        self.beta_used = float(beta)
        self.H = float(H)
        self.p = int(p)
        m = instance.metric
        self.grad_f = instance.smooth.grad(self.T)
        _, reg_grad = reg_value_grad(instance, self.anchor, H, p, self.T)
        self.r = m.norm(self.T - self.anchor)
        self.grad_F_norm = m.dual_norm(self.grad_f + self.g)
        self.reg_grad_norm = m.dual_norm(reg_grad + self.g)
        slack = tol.acceptance_abs + tol.acceptance_rel * self.grad_F_norm
        if self.reg_grad_norm > beta * self.grad_F_norm + slack:
            raise AssertionError(
                "acceptance inequality violated: "
                f"{self.reg_grad_norm:.3e} > {beta:.3g} * {self.grad_F_norm:.3e}")
        rep = check_lemma_properties(self, H, p, x_star=None)
        bad = [k for k, v in rep.items() if v is not None and not v["ok"]]
        if bad:
            raise AssertionError(f"accepted-point property failed: {bad}")

    def composite_grad(self) -> np.ndarray:
        """grad f(T) + g (the dual vector whose norm drives the drivers)."""
        return self.grad_f + self.g


def check_lemma_properties(accepted: AcceptedPoint, H: float, p: int,
                           x_star: np.ndarray | None = None,
                           rel_slack: float = 1e-9) -> dict:
    """Diagnostic report for the first-order consequences of acceptance.

    Checks the residual bracket
      (1-beta) ||grad f(T)+g||_* <= H r^p <= (1+beta) ||grad f(T)+g||_*,
    the descent inner product
      <grad f(T)+g, xbar - T> >= (H/(1+beta)) r^{p+1},
    its norm form (only when beta <= 1/p), and, when x* is known and
    beta <= 3/8, the contraction ||T - x*|| <= (5/4) ||xbar - x*||.
    """
    inst = accepted._instance
    m = inst.metric
    beta = accepted.beta_used
    gn = accepted.grad_F_norm
    r = accepted.r
    comp = accepted.composite_grad()
    hrp = H * r ** p
    scale = max(gn, hrp, 1e-300)

    def entry(ok, lhs, rhs):
        return {"ok": bool(ok), "lhs": float(lhs), "rhs": float(rhs)}

    report = {}
    report["residual_bracket_lower"] = entry(
        (1.0 - beta) * gn <= hrp + rel_slack * scale, (1.0 - beta) * gn, hrp)
    report["residual_bracket_upper"] = entry(
        hrp <= (1.0 + beta) * gn + rel_slack * scale, hrp, (1.0 + beta) * gn)
    ip = float(comp @ (accepted.anchor - accepted.T))
    rhs2 = (H / (1.0 + beta)) * r ** (p + 1)
    report["descent_inner_product"] = entry(
        ip >= rhs2 - rel_slack * max(abs(ip), rhs2, 1e-300), ip, rhs2)
    if beta <= 1.0 / p:
        rhs3 = ((1.0 - beta) / H) ** (1.0 / p) * gn ** ((p + 1) / p)
        report["descent_norm_form"] = entry(
            ip >= rhs3 - rel_slack * max(abs(ip), rhs3, 1e-300), ip, rhs3)
    else:
        report["descent_norm_form"] = None
    if x_star is not None and beta <= 3.0 / 8.0:
        lhs4 = m.norm(accepted.T - x_star)
        rhs4 = 1.25 * m.norm(accepted.anchor - x_star)
        report["contraction_5_4"] = entry(lhs4 <= rhs4 + rel_slack * max(rhs4, 1e-300),
                                          lhs4, rhs4)
    else:
        report["contraction_5_4"] = None
    return report
