"""Oracles for the composite problem F = f + psi and concrete instance families.

The smooth part exposes, besides values and gradients, the contracted
even-order directional forms D^{2k} f(y)[h]^{2k} and their h-gradients;
for separable f(x) = sum_i f_i(<a_i, x> - b_i) these reduce to scalar
derivative data of the f_i, which keeps every oracle call O(N * dim).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import DomainViolation
from .numerics import Metric


# ---------------------------------------------------------------------------
# simple part
# ---------------------------------------------------------------------------

class SimpleOracle:
    """Simple convex part psi with closed-form scaled prox.

    Supported kinds: "zero", "l1" (weight * ||x||_1) and "box"
    (indicator of [lo, hi]).  scaled_prox solves
    min_x 1/2 ||x - w||^2 + lam * psi(x) in the metric norm; closed forms
    exist for identity/diagonal metrics, which is all the benchmarks use.
    """

    def __init__(self, kind: str = "zero", weight: float = 1.0,
                 lo: np.ndarray | float | None = None,
                 hi: np.ndarray | float | None = None):
        if kind not in ("zero", "l1", "box"):
            raise ValueError(f"unknown psi kind {kind!r}")
        self.kind = kind
        self.weight = float(weight)
        self.lo = None if lo is None else np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = None if hi is None else np.atleast_1d(np.asarray(hi, dtype=float))
        if kind == "box" and (self.lo is None or self.hi is None):
            raise ValueError("box psi needs lo and hi")

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return self.weight * float(np.sum(np.abs(x)))
        inside = np.all(x >= self.lo - 1e-12) and np.all(x <= self.hi + 1e-12)
        return 0.0 if inside else math.inf

    def scaled_prox(self, lam: float, w: np.ndarray, metric: Metric) -> np.ndarray:
        """argmin_x 1/2 ||x - w||_B^2 + lam * psi(x)."""
        w = np.asarray(w, dtype=float)
        if lam < 0:
            raise ValueError("lam must be >= 0")
        if self.kind == "zero":
            return w.copy()
        if not metric.is_diagonal:
            raise NotImplementedError("l1/box prox needs an identity or diagonal metric")
        d = np.diag(metric.B) if not metric.is_identity else np.ones_like(w)
        if self.kind == "l1":
            thr = lam * self.weight / d
            return np.sign(w) * np.maximum(np.abs(w) - thr, 0.0)
        return np.clip(w, self.lo, self.hi)

    def in_subdifferential(self, x: np.ndarray, g: np.ndarray, tol: float = 1e-8) -> bool:
        """Check g in partial psi(x) componentwise (diagonal-friendly kinds)."""
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        if self.kind == "zero":
            return bool(np.all(np.abs(g) <= tol))
        if self.kind == "l1":
            w = self.weight
            at_zero = np.abs(x) <= tol
            ok_zero = np.abs(g[at_zero]) <= w + tol
            ok_sign = np.abs(g[~at_zero] - w * np.sign(x[~at_zero])) <= tol
            return bool(np.all(ok_zero) and np.all(ok_sign))
        # box: normal cone of [lo, hi]
        ok = np.ones(x.shape, dtype=bool)
        interior = (x > self.lo + tol) & (x < self.hi - tol)
        ok &= ~interior | (np.abs(g) <= tol)
        ok &= (x > self.lo + tol) | (g <= tol)
        ok &= (x < self.hi - tol) | (g >= -tol)
        return bool(np.all(ok))

    def to_json(self) -> dict:
        out = {"kind": "none" if self.kind == "zero" else self.kind}
        if self.kind == "l1":
            out["weight"] = self.weight
        if self.kind == "box":
            out["lo"] = self.lo.tolist()
            out["hi"] = self.hi.tolist()
        return out

    @staticmethod
    def from_json(spec: dict | None) -> "SimpleOracle":
        if not spec or spec.get("kind") in (None, "none", "zero"):
            return SimpleOracle("zero")
        kind = spec["kind"]
        if kind == "l1":
            return SimpleOracle("l1", weight=spec.get("weight", 1.0))
        if kind == "box":
            return SimpleOracle("box", lo=spec["lo"], hi=spec["hi"])
        raise ValueError(f"unknown psi kind {kind!r}")


# ---------------------------------------------------------------------------
# scalar families for the separable smooth part
# ---------------------------------------------------------------------------

def _logbar_deriv(t: np.ndarray, n: int) -> np.ndarray:
    # f(t) = -log t, f^{(n)}(t) = (-1)^n (n-1)! / t^n
    if n == 0:
        return -np.log(t)
    return ((-1.0) ** n) * math.factorial(n - 1) / t ** n


def _power4_deriv(t: np.ndarray, n: int) -> np.ndarray:
    # f(t) = t^4 / 12
    if n == 0:
        return t ** 4 / 12.0
    if n == 1:
        return t ** 3 / 3.0
    if n == 2:
        return t ** 2
    if n == 3:
        return 2.0 * t
    if n == 4:
        return np.full_like(t, 2.0)
    return np.zeros_like(t)


def _softplus_deriv(t: np.ndarray, n: int) -> np.ndarray:
    # f(t) = log(1 + e^t); derivatives are polynomials in s = sigmoid(t)
    if n == 0:
        return np.logaddexp(0.0, t)
    s = 0.5 * (1.0 + np.tanh(0.5 * t))
    if n == 1:
        return s
    v = s * (1.0 - s)
    if n == 2:
        return v
    if n == 3:
        return v * (1.0 - 2.0 * s)
    if n == 4:
        return v * (1.0 - 6.0 * s + 6.0 * s * s)
    if n == 5:
        return v * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s)
    if n == 6:
        return v * (1.0 - 30.0 * s + 150.0 * s ** 2 - 240.0 * s ** 3 + 120.0 * s ** 4)
    raise NotImplementedError(f"softplus derivative order {n} not tabulated")


_FAMILIES = {
    "log_barrier": (_logbar_deriv, True),   # (deriv fn, has open domain t > 0)
    "power4": (_power4_deriv, False),
    "softplus": (_softplus_deriv, False),
}


# ---------------------------------------------------------------------------
# smooth oracles
# ---------------------------------------------------------------------------

class SmoothOracle:
    """Interface of the smooth part f."""

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def even_form(self, y: np.ndarray, h: np.ndarray, order: int) -> float:
        """D^{order} f(y)[h]^{order} for even order."""
        raise NotImplementedError

    def even_form_grad(self, y: np.ndarray, h: np.ndarray, order: int) -> np.ndarray:
        """h-gradient of even_form: order * D^{order} f(y)[h]^{order-1}."""
        raise NotImplementedError

    def deriv_bound(self, order: int) -> float | None:
        """Uniform bound M_order(f) on the operating region, if declared."""
        return None

    def in_domain(self, x: np.ndarray) -> bool:
        return True


class SeparableOracle(SmoothOracle):
    """f(x) = sum_i f_i(<a_i, x> - b_i) for a scalar family f_i.

    slack_min declares the operating region for log-barrier instances:
    derivative bounds are computed assuming all slacks stay >= slack_min.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, family: str,
                 slack_min: float | None = None):
        if family not in _FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A rows must match b")
        self.family = family
        self.deriv, self.open_domain = _FAMILIES[family]
        self.slack_min = slack_min

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def _slacks(self, x: np.ndarray, check: bool = True) -> np.ndarray:
        t = self.A @ np.asarray(x, dtype=float) - self.b
        if check and self.open_domain and np.any(t <= 0.0):
            idx = int(np.argmin(t))
            raise DomainViolation(f"domain violation at row {idx}", index=idx)
        return t

    def in_domain(self, x: np.ndarray) -> bool:
        if not self.open_domain:
            return True
        return bool(np.all(self.A @ np.asarray(x, dtype=float) - self.b > 0.0))

    def value(self, x: np.ndarray) -> float:
        if self.open_domain and not self.in_domain(x):
            return math.inf
        return float(np.sum(self.deriv(self._slacks(x, check=False), 0)))

    def grad(self, x: np.ndarray) -> np.ndarray:
        t = self._slacks(x)
        return self.A.T @ self.deriv(t, 1)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        t = self._slacks(x)
        return (self.A * self.deriv(t, 2)[:, None]).T @ self.A

    def even_form(self, y: np.ndarray, h: np.ndarray, order: int) -> float:
        if order < 2 or order % 2:
            raise ValueError("order must be even and >= 2")
        t = self._slacks(y)
        s = self.A @ np.asarray(h, dtype=float)
        return float(np.sum(self.deriv(t, order) * s ** order))

    def even_form_grad(self, y: np.ndarray, h: np.ndarray, order: int) -> np.ndarray:
        if order < 2 or order % 2:
            raise ValueError("order must be even and >= 2")
        t = self._slacks(y)
        s = self.A @ np.asarray(h, dtype=float)
        return order * (self.A.T @ (self.deriv(t, order) * s ** (order - 1)))

    def deriv_bound(self, order: int) -> float | None:
        row_norms = np.linalg.norm(self.A, axis=1)
        if self.family == "log_barrier":
            if self.slack_min is None:
                return None
            per_row = math.factorial(order - 1) / self.slack_min ** order
            return float(per_row * np.sum(row_norms ** order))
        if self.family == "power4":
            if order >= 5:
                return 0.0
            if order == 4:
                return float(2.0 * np.sum(row_norms ** 4))
            return None  # unbounded below order 4 (t unbounded)
        if self.family == "softplus":
            grid = np.linspace(-40.0, 40.0, 20001)
            peak = float(np.max(np.abs(self.deriv(grid, order))))
            return float(peak * np.sum(row_norms ** order))
        return None


class QuadraticOracle(SmoothOracle):
    """f(x) = 1/2 <Qx, x> - <c, x> with Q symmetric PSD."""

    def __init__(self, Q: np.ndarray, c: np.ndarray):
        self.Q = np.asarray(Q, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if not np.allclose(self.Q, self.Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ (self.Q @ x)) - float(self.c @ x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ np.asarray(x, dtype=float) - self.c

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.Q.copy()

    def even_form(self, y: np.ndarray, h: np.ndarray, order: int) -> float:
        if order == 2:
            h = np.asarray(h, dtype=float)
            return float(h @ (self.Q @ h))
        return 0.0

    def even_form_grad(self, y: np.ndarray, h: np.ndarray, order: int) -> np.ndarray:
        if order == 2:
            return 2.0 * (self.Q @ np.asarray(h, dtype=float))
        return np.zeros(self.dim)

    def deriv_bound(self, order: int) -> float | None:
        if order == 2:
            return float(np.linalg.norm(self.Q, 2))
        if order >= 3:
            return 0.0
        return None


# ---------------------------------------------------------------------------
# problem instances
# ---------------------------------------------------------------------------

@dataclass
class ProblemInstance:
    smooth: SmoothOracle
    simple: SimpleOracle
    metric: Metric
    dim: int
    name: str = "instance"
    optimum: tuple[np.ndarray, float] | None = None  # (x*, F*)
    meta: dict = field(default_factory=dict)

    def F(self, x: np.ndarray) -> float:
        pv = self.simple.value(x)
        if not math.isfinite(pv):
            return math.inf
        return self.smooth.value(x) + pv

    @property
    def x_star(self) -> np.ndarray | None:
        return None if self.optimum is None else self.optimum[0]

    @property
    def F_star(self) -> float | None:
        return None if self.optimum is None else self.optimum[1]


def build_quadratic(Q: np.ndarray, c: np.ndarray,
                    psi: SimpleOracle | None = None,
                    name: str = "quadratic") -> ProblemInstance:
    smooth = QuadraticOracle(Q, c)
    psi = psi or SimpleOracle("zero")
    metric = Metric(dim=smooth.dim)
    optimum = None
    if psi.kind == "zero":
        x_star = np.linalg.solve(smooth.Q, smooth.c)
        optimum = (x_star, smooth.value(x_star))
    return ProblemInstance(smooth, psi, metric, smooth.dim, name=name, optimum=optimum)


def build_example_1d() -> ProblemInstance:
    """F(x) = 1/2 x^2 + |x| on the line; unique minimizer x* = 0."""
    smooth = QuadraticOracle(np.array([[1.0]]), np.array([0.0]))
    psi = SimpleOracle("l1", weight=1.0)
    inst = ProblemInstance(smooth, psi, Metric(dim=1), 1, name="example1d",
                           optimum=(np.array([0.0]), 0.0))
    return inst


def build_separable(a_rows: np.ndarray, b: np.ndarray, family: str,
                    psi: SimpleOracle | None = None,
                    slack_min: float | None = None,
                    name: str | None = None) -> ProblemInstance:
    smooth = SeparableOracle(a_rows, b, family, slack_min=slack_min)
    psi = psi or SimpleOracle("zero")
    return ProblemInstance(smooth, psi, Metric(dim=smooth.dim), smooth.dim,
                           name=name or f"separable-{family}")


def newton_minimize(smooth: SmoothOracle, x0: np.ndarray, tol: float = 1e-13,
                    max_iter: int = 200) -> np.ndarray:
    """Damped Newton for a smooth strictly convex f; feasibility-safe steps."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        g = smooth.grad(x)
        if np.linalg.norm(g) <= tol:
            break
        Hm = smooth.hessian(x)
        try:
            step = np.linalg.solve(Hm + 1e-14 * np.eye(len(x)), g)
        except np.linalg.LinAlgError:
            step = g
        t = 1.0
        fx = smooth.value(x)
        for _ in range(60):
            xn = x - t * step
            if smooth.in_domain(xn) and smooth.value(xn) <= fx - 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        x = x - t * step
    return x


def build_logbar(N: int, dim: int, seed: int = 0) -> ProblemInstance:
    """Bounded log-barrier instance: rows [G; -G] with x = ones interior.

    Pairing each Gaussian row with its negation bounds the feasible polytope,
    so f has a unique (analytic-center-like) minimizer, computed to high
    accuracy for benchmarking.
    """
    if N % 2:
        raise ValueError("N must be even (paired rows)")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((N // 2, dim))
    e = np.ones(dim)
    s_up = rng.uniform(0.5, 1.5, size=N // 2)
    s_dn = rng.uniform(0.5, 1.5, size=N // 2)
    A = np.vstack([G, -G])
    b = np.concatenate([G @ e - s_up, -(G @ e) - s_dn])
    smooth = SeparableOracle(A, b, "log_barrier")
    x_star = newton_minimize(smooth, e)
    slack_star = np.min(A @ x_star - b)
    slack_x0 = np.min(A @ e - b)
    smooth.slack_min = 0.25 * float(min(slack_star, slack_x0))
    inst = ProblemInstance(smooth, SimpleOracle("zero"), Metric(dim=dim), dim,
                           name=f"logbar-{N}-{dim}",
                           optimum=(x_star, smooth.value(x_star)))
    inst.meta["x0"] = e
    return inst


def build_builtin(name: str, seed: int = 0) -> ProblemInstance:
    """Builtin benchmark instances: example1d, quad-<d>, logbar-<N>-<d>."""
    if name == "example1d":
        return build_example_1d()
    if name.startswith("quad-"):
        dim = int(name.split("-")[1])
        rng = np.random.default_rng(seed)
        Gm = rng.standard_normal((dim, dim))
        Q = Gm.T @ Gm / dim + 0.5 * np.eye(dim)
        c = rng.standard_normal(dim)
        inst = build_quadratic(Q, c, name=name)
        inst.meta["x0"] = np.ones(dim)
        return inst
    if name.startswith("logbar-"):
        _, N, dim = name.split("-")
        return build_logbar(int(N), int(dim), seed=seed)
    raise ValueError(f"unknown builtin instance {name!r}")


def load_instance(path: str) -> ProblemInstance:
    """Load an instance description from a JSON file.

    Schema: {"family": ..., "A": [[...]], "b": [...],
             "psi": {"kind": "none|l1|box", ...}, "slack_min": ...}.
    family "quadratic" reads "Q" and "c" instead of "A"/"b".
    """
    with open(path) as fh:
        spec = json.load(fh)
    psi = SimpleOracle.from_json(spec.get("psi"))
    family = spec["family"]
    if family == "quadratic":
        return build_quadratic(np.asarray(spec["Q"], dtype=float),
                               np.asarray(spec["c"], dtype=float), psi=psi,
                               name=spec.get("name", "quadratic"))
    return build_separable(np.asarray(spec["A"], dtype=float),
                           np.asarray(spec["b"], dtype=float), family, psi=psi,
                           slack_min=spec.get("slack_min"),
                           name=spec.get("name"))
