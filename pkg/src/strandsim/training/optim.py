"""Adam and L-BFGS over flat float64 parameter vectors."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, x) -> "AdamState":
        return cls(np.zeros_like(x), np.zeros_like(x), 0)


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One bias-corrected Adam update. Returns (new_params, state); state is updated in place."""
    state.t += 1
    state.m *= beta1
    state.m += (1 - beta1) * grads
    state.v *= beta2
    state.v += (1 - beta2) * grads * grads
    m_hat = state.m / (1 - beta1**state.t)
    v_hat = state.v / (1 - beta2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), state


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    n_iter: int
    n_eval: int
    reason: str
    history: list[float] = field(default_factory=list)


Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


def lbfgs_minimize(objective: Objective, x0, history: int = 10, max_iter: int = 1000, patience: int = 200,
                   gtol: float = 1e-12, c1: float = 1e-4, shrink: float = 0.5, max_backtrack: int = 40,
                   callback=None) -> OptimResult:
    """Limited-memory BFGS with an Armijo backtracking line search.

    Stops when the gradient norm drops to ``gtol``, after ``max_iter``
    iterations, or when the best loss has not improved for ``patience``
    iterations.
    """
    x = np.array(x0, dtype=float)
    f, g = objective(x)
    n_eval = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the starting point")
    S: deque = deque(maxlen=history)
    Y: deque = deque(maxlen=history)
    best, since_best = f, 0
    hist = [float(f)]
    reason = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) <= gtol:
            reason, it = "gradient", it - 1
            break
        d = -_two_loop(g, S, Y)
        slope = float(g @ d)
        if not slope < 0:
            S.clear()
            Y.clear()
            d, slope = -g, -float(g @ g)
        step = 1.0 if S else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        accepted = False
        for _ in range(max_backtrack):
            x_new = x + step * d
            f_new, g_new = objective(x_new)
            n_eval += 1
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                accepted = True
                break
            step *= shrink
        if not accepted:
            if S:
                S.clear()
                Y.clear()
                continue
            reason = "line_search"
            break
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, f, g = x_new, f_new, g_new
        hist.append(float(f))
        if callback is not None:
            callback(it, x, f)
        if f < best:
            best, since_best = f, 0
        else:
            since_best += 1
            if since_best >= patience:
                reason = "patience"
                break
    return OptimResult(x, float(f), it, n_eval, reason, hist)


def _two_loop(g, S, Y):
    q = g.copy()
    if not S:
        return q
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(S, Y)]
    for s, y, rho in zip(reversed(S), reversed(Y), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y = S[-1], Y[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(S, Y, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q
