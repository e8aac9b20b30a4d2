"""Quasi-Newton minimization with a backtracking line search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def central_gradient(fun, x, rel_step=1e-6):
    """Central differences with step ``rel_step * max(1, |x_i|)``."""
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def bfgs(fun, x0, grad, gtol=1e-6, ftol=1e-10, max_iter=500):
    """Minimize ``fun`` with BFGS updates of the inverse Hessian.

    Converged when the gradient inf-norm is below ``gtol`` and the last
    decrease of ``fun`` is below ``ftol * max(1, |f|)``. ``fun`` may return
    ``inf`` outside its domain; the line search then backtracks.
    """
    x = np.asarray(x0, float).copy()
    f = fun(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    g = grad(x)
    n = x.size
    H = np.eye(n)
    scaled = False
    df = np.inf
    for it in range(1, max_iter + 1):
        gmax = np.max(np.abs(g)) if n else 0.0
        if gmax < gtol and df <= ftol * max(1.0, abs(f)):
            return OptimizeResult(x, f, g, it - 1, True, "converged")
        d = -H @ g
        slope = g @ d
        if slope >= 0:
            H = np.eye(n)
            d = -g
            slope = g @ d
        step = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + step * d
            f_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if gmax < gtol:
                return OptimizeResult(x, f, g, it - 1, True, "converged (no further decrease possible)")
            if not np.allclose(H, np.eye(n)):
                H = np.eye(n)
                scaled = False
                continue
            return OptimizeResult(x, f, g, it - 1, False, "line search failed")
        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        df = f - f_new
        x, f, g = x_new, f_new, g_new
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = np.eye(n) * (sy / (y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)
    gmax = np.max(np.abs(g)) if n else 0.0
    ok = gmax < gtol and df <= ftol * max(1.0, abs(f))
    return OptimizeResult(x, f, g, max_iter, ok, "converged" if ok else "maximum iterations reached")
