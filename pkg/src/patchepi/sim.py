"""Time integration of the coupled patch system.

dX/dt equals the coupled residual, so equilibria of the continuation
module are rest points of these trajectories. The integrator is an
adaptive Dormand-Prince 5(4) pair with one model-specific twist: an
accepted step may not take any component below -1e-9. Undershoots
trigger step rejection rather than clipping, which keeps trajectories
honest about forward invariance of the nonnegative cone instead of
enforcing it silently.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .continuation import build_rhs
from .model import InadmissibleStateError, PatchModel
from .network import MobilityNetwork

DEFAULT_T_END = 5e3           # trajectories settle well before (1/mu = 20)
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
UNDERSHOOT_TOL = -1e-9
CLASSIFY_TOL = 1e-4           # relative sup-norm distance to an equilibrium
MAX_STEPS = 2_000_000

# Dormand-Prince 5(4) tableau. Last stage row doubles as the 5th-order
# weights (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


class StepSizeUnderflowError(RuntimeError):
    """Step control drove h below the resolvable scale (stiff failure)."""


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray               # shape (steps,)
    states: np.ndarray              # shape (steps, r * (n + m + k))
    terminal_classification: str

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]


def _classify_terminal(X: np.ndarray, classified) -> str:
    """Label of the nearest classified equilibrium within tolerance."""
    if not classified:
        return "unresolved"
    best_label, best_dist = "unresolved", np.inf
    for label, Xeq in classified:
        Xeq = np.asarray(Xeq, dtype=float)
        dist = float(np.max(np.abs(X - Xeq))) / (1.0 + float(np.max(np.abs(Xeq))))
        if dist <= CLASSIFY_TOL and dist < best_dist:
            best_label, best_dist = label, dist
    return best_label


def _initial_step(f0: np.ndarray, X0: np.ndarray, t_end: float,
                  rtol: float, atol: float) -> float:
    scale = atol + rtol * np.abs(X0)
    d0 = float(np.sqrt(np.mean((X0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * d0 / d1
    return min(h, t_end * 0.1)


def integrate(models: Sequence[PatchModel], net: MobilityNetwork,
              alpha: float, X0: np.ndarray, t_end: float = DEFAULT_T_END,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              classified: Optional[Sequence[Tuple[str, np.ndarray]]] = None
              ) -> Trajectory:
    """Integrate the coupled system from X0 over [0, t_end].

    classified is an optional list of (label, equilibrium state) pairs;
    the trajectory is labeled by the nearest one within relative
    sup-norm distance 1e-4 of the final state, else "unresolved".
    """
    X = np.asarray(X0, dtype=float).copy()
    if X.ndim != 1:
        raise ValueError("X0 must be a flat coupled state vector")
    if float(np.min(X)) < UNDERSHOOT_TOL:
        raise InadmissibleStateError("initial state has negative components")
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")

    rhs = build_rhs(models, net, alpha)

    t = 0.0
    f_cur = rhs(X)
    h = _initial_step(f_cur, X, t_end, rtol, atol)
    h_min = max(1e-14 * t_end, 1e-13)
    times = [0.0]
    states = [X.copy()]
    K = np.empty((7, X.size))
    for _ in range(MAX_STEPS):
        if t >= t_end:
            break
        h = min(h, t_end - t)
        K[0] = f_cur
        # a trial step may wander outside the admissible set; that is a
        # rejection, not an error
        try:
            for s in range(1, 7):
                K[s] = rhs(X + h * (_DP_A[s] @ K[:s]))
            X5 = X + h * (_DP_B5 @ K)
            X4 = X + h * (_DP_B4 @ K)
            scale = atol + rtol * np.maximum(np.abs(X), np.abs(X5))
            err = float(np.sqrt(np.mean(((X5 - X4) / scale) ** 2)))
            if not np.isfinite(err):
                err = np.inf
        except InadmissibleStateError:
            err = np.inf
        if err <= 1.0 and float(np.min(X5)) >= UNDERSHOOT_TOL:
            t += h
            X = X5
            f_cur = K[6]        # FSAL: last stage is rhs at the new point
            times.append(t)
            states.append(X.copy())
            factor = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
            h *= max(factor, 0.2)
        else:
            if np.isfinite(err) and err > 1.0:
                h *= max(0.2, 0.9 * err ** -0.2)
            else:
                h *= 0.5        # nonnegativity or admissibility rejection
            if h < h_min:
                raise StepSizeUnderflowError(
                    f"step size underflow at t = {t:g} (h = {h:.3e})")
    else:
        raise StepSizeUnderflowError(
            f"integration exceeded {MAX_STEPS} steps at t = {t:g}")
    return Trajectory(times=np.asarray(times), states=np.asarray(states),
                      terminal_classification=_classify_terminal(X, classified))


def basin_probe(models: Sequence[PatchModel], net: MobilityNetwork,
                alpha: float, initial_set: Sequence[Tuple[str, np.ndarray]],
                t_end: float = DEFAULT_T_END,
                rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                classified: Optional[Sequence[Tuple[str, np.ndarray]]] = None
                ) -> List[Tuple[str, str]]:
    """Terminal classification for each labeled initial state, in order."""
    table = []
    for label, X0 in initial_set:
        traj = integrate(models, net, alpha, X0, t_end=t_end, rtol=rtol,
                         atol=atol, classified=classified)
        table.append((label, traj.terminal_classification))
    return table
