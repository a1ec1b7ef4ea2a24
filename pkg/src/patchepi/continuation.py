"""Continuation of product equilibria in the mobility parameter.

The coupled residual stacks the patch equations and is affine in alpha:

    T(alpha, X) = T_patch(X) + alpha * L(X),

where L moves each compartment class between regions at the connectivity
rates. Every disconnected product equilibrium is a root at alpha = 0;
each is followed along an increasing alpha grid by an Euler predictor
and a damped Newton corrector, recording component signs and linear
stability along the way. A branch is abandoned (never projected back)
once a component drops below the sign-noise band: outside the cone the
state has no epidemiological meaning.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import matalg
from .equilibria import EquilibriumPattern, patch_equilibria
from .model import (InadmissibleStateError, PatchModel,
                    patch_jacobian, patch_residual, split_state)
from .network import MobilityNetwork
from .persist import BranchDerivative

NEWTON_TOL = 1e-10        # corrector target, residual sup norm
ACCEPT_TOL = 1e-9         # accepted-point invariant
SIGN_EXIT_TOL = -1e-9     # below this a component counts as negative
STABILITY_MARGIN = 1e-9
MAX_NEWTON_ITERS = 60
MAX_HALVINGS = 20         # Armijo: step down to 2^-20
ARMIJO_SLOPE = 1e-4

DEFAULT_ALPHA_GRID = tuple(10.0 ** e for e in range(-8, 0))


class HypothesisViolationError(RuntimeError):
    """Coupled Jacobian singular where the theory requires otherwise."""


class CorrectionFailureError(RuntimeError):
    """Newton corrector failed to reach the residual target."""


@dataclass(frozen=True)
class CoupledState:
    """One accepted branch point of the coupled system."""
    alpha: float
    X: np.ndarray
    residual_norm: float
    stability: str            # "stable" | "unstable" | "marginal"
    min_component: float
    max_real_eig: float


@dataclass(frozen=True)
class BranchRecord:
    pattern: EquilibriumPattern
    points: List[CoupledState]
    exit_alpha: Optional[float]
    verdict_observed: str     # "persists" | "vanishes"
    failure: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.failure is None


def _check_families(models: Sequence[PatchModel], net: MobilityNetwork):
    if len(models) != net.r:
        raise ValueError("one patch model per region required")
    n, m, k = models[0].n, models[0].m, models[0].k
    for mod in models:
        if (mod.n, mod.m, mod.k) != (n, m, k):
            raise ValueError("all patches must share block sizes")
    if net.block_sizes != (n, m, k):
        raise ValueError("network connectivity sized for different blocks")
    return n, m, k


def _block_slices(r: int, n: int, m: int, k: int):
    s = n + m + k
    return [(slice(i * s, i * s + n),
             slice(i * s + n, i * s + n + m),
             slice(i * s + n + m, (i + 1) * s)) for i in range(r)]


# ====================================================================
# Coupled residual and Jacobian
# ====================================================================

def travel_operator(net: MobilityNetwork, X: np.ndarray) -> np.ndarray:
    """L(X): the alpha-linear travel part of the coupled residual."""
    n, m, k = net.block_sizes
    r = net.r
    slices = _block_slices(r, n, m, k)
    out = np.zeros_like(X)
    for c, pos in ((net.cx, 0), (net.cy, 1), (net.cz, 2)):
        outflow = c.sum(axis=0)                    # [i, :] = sum_j C^{ji}
        for i in range(r):
            sl = slices[i][pos]
            acc = -outflow[i] * X[sl]
            for j in range(r):
                if j != i:
                    acc = acc + c[i, j] * X[slices[j][pos]]
            out[sl] = acc
    return out


def coupled_residual(models: Sequence[PatchModel], net: MobilityNetwork,
                     alpha: float, X: np.ndarray) -> np.ndarray:
    """Stacked patch residuals plus alpha-scaled travel terms."""
    n, m, k = _check_families(models, net)
    s = n + m + k
    X = np.asarray(X, dtype=float)
    if X.shape != (net.r * s,):
        raise ValueError(f"state length {X.size}, expected {net.r * s}")
    res = np.empty_like(X)
    for i, mod in enumerate(models):
        res[i * s:(i + 1) * s] = patch_residual(
            mod, split_state(mod, X[i * s:(i + 1) * s]))
    if alpha != 0.0:
        res += alpha * travel_operator(net, X)
    return res


def coupled_jacobian(models: Sequence[PatchModel], net: MobilityNetwork,
                     alpha: float, X: np.ndarray) -> np.ndarray:
    """Block-diagonal patch Jacobians plus alpha-scaled coupling diagonals."""
    n, m, k = _check_families(models, net)
    s = n + m + k
    r = net.r
    X = np.asarray(X, dtype=float)
    J = np.zeros((r * s, r * s))
    for i, mod in enumerate(models):
        J[i * s:(i + 1) * s, i * s:(i + 1) * s] = patch_jacobian(
            mod, split_state(mod, X[i * s:(i + 1) * s]))
    if alpha == 0.0:
        return J
    slices = _block_slices(r, n, m, k)
    for c, pos in ((net.cx, 0), (net.cy, 1), (net.cz, 2)):
        outflow = c.sum(axis=0)
        for i in range(r):
            sl_i = slices[i][pos]
            J[sl_i, sl_i] -= alpha * np.diag(outflow[i])
            for j in range(r):
                if j != i and np.any(c[i, j] > 0.0):
                    J[sl_i, slices[j][pos]] += alpha * np.diag(c[i, j])
    return J


def travel_matrix(net: MobilityNetwork) -> np.ndarray:
    """Dense matrix of the linear travel operator L."""
    n, m, k = net.block_sizes
    s = n + m + k
    size = net.r * s
    M = np.zeros((size, size))
    slices = _block_slices(net.r, n, m, k)
    for c, pos in ((net.cx, 0), (net.cy, 1), (net.cz, 2)):
        outflow = c.sum(axis=0)
        for i in range(net.r):
            sl_i = slices[i][pos]
            M[sl_i, sl_i] -= np.diag(outflow[i])
            for j in range(net.r):
                if j != i:
                    M[sl_i, slices[j][pos]] += np.diag(c[i, j])
    return M


def build_rhs(models: Sequence[PatchModel], net: MobilityNetwork,
              alpha: float):
    """Closure computing coupled_residual(models, net, alpha, X) fast.

    Precomputes per-patch constants and the travel matrix so repeated
    evaluation (time integration) skips all construction and validation.
    Only affine recruitment is fast-pathed; models with a recruitment
    callback fall back to the reference implementation.
    """
    n, m, k = _check_families(models, net)
    s = n + m + k
    r = net.r
    incidences = {mod.incidence for mod in models}
    if any(mod.g_func is not None for mod in models) or len(incidences) > 1:
        def rhs_ref(X):
            return coupled_residual(models, net, alpha, X)
        return rhs_ref
    standard = incidences.pop() == "standard"

    # everything linear in X collapses into one matrix
    M = alpha * travel_matrix(net)
    c = np.zeros(r * s)
    for i, mod in enumerate(models):
        base = i * s
        M[base:base + n, base:base + n] -= mod.V
        M[base + n:base + n + m, base + n:base + n + m] += mod.g_lin
        M[base + n + m:base + s, base:base + n] += mod.Z
        M[base + n + m:base + s, base + n + m:base + s] -= mod.D
        c[base + n:base + n + m] = mod.g_const
    # H[i, p, j, q] = eta[i][p, q, j] beta[i][p, q] contracts new infections
    H = np.stack([np.einsum("pqj,pq->pjq", mod.eta, mod.beta)
                  for mod in models])
    beta_all = np.stack([mod.beta for mod in models])

    def rhs(X):
        X3 = X.reshape(r, s)
        xs = X3[:, :n]
        ys = X3[:, n:n + m]
        if standard:
            Ns = xs.sum(axis=1) + ys.sum(axis=1)
            if np.any(Ns <= 0.0):
                raise InadmissibleStateError(
                    "standard incidence undefined at N = 0")
            xeff = xs / Ns[:, None]
        else:
            xeff = xs
        out = M @ X + c
        out3 = out.reshape(r, s)
        out3[:, :n] += np.einsum("rpjq,rq,rp->rj", H, xeff, ys)
        out3[:, n:n + m] -= ys * np.einsum("rpq,rq->rp", beta_all, xeff)
        return out

    return rhs


# ====================================================================
# Corrector
# ====================================================================

def _newton_correct(models, net, alpha, X0):
    """Damped Newton for T(alpha, .) = 0 from X0. Returns (X, residual_norm)."""
    X = np.array(X0, dtype=float)
    res = coupled_residual(models, net, alpha, X)
    rnorm = float(np.max(np.abs(res)))
    for _ in range(MAX_NEWTON_ITERS):
        if rnorm <= NEWTON_TOL:
            return X, rnorm
        J = coupled_jacobian(models, net, alpha, X)
        try:
            step = matalg.solve_linear(J, -res)
        except matalg.SingularMatrixError as exc:
            raise CorrectionFailureError(
                f"singular Jacobian at alpha = {alpha:g}") from exc
        merit = rnorm * rnorm
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            try:
                trial = X + t * step
                res_t = coupled_residual(models, net, alpha, trial)
                m_t = float(np.max(np.abs(res_t))) ** 2
                if m_t <= (1.0 - 2.0 * ARMIJO_SLOPE * t) * merit:
                    break
            except InadmissibleStateError:
                pass
            t *= 0.5
        else:
            if rnorm <= ACCEPT_TOL:
                return X, rnorm
            raise CorrectionFailureError(
                f"Newton stalled at alpha = {alpha:g}, residual {rnorm:.3e}")
        X = trial
        res = res_t
        rnorm = float(np.max(np.abs(res)))
    if rnorm <= ACCEPT_TOL:
        return X, rnorm
    raise CorrectionFailureError(
        f"Newton exceeded {MAX_NEWTON_ITERS} iterations at alpha = {alpha:g}")


def _stability(models, net, alpha, X):
    eigs = matalg.eigen_spectrum(coupled_jacobian(models, net, alpha, X))
    top = float(np.max(eigs.real))
    if top < -STABILITY_MARGIN:
        return "stable", top
    if top > STABILITY_MARGIN:
        return "unstable", top
    return "marginal", top


def _accept(models, net, alpha, X, rnorm) -> CoupledState:
    stability, top = _stability(models, net, alpha, X)
    return CoupledState(alpha=float(alpha), X=X,
                        residual_norm=rnorm, stability=stability,
                        min_component=float(np.min(X)), max_real_eig=top)


# ====================================================================
# Branch continuation
# ====================================================================

def product_state(pattern: EquilibriumPattern, models: Sequence[PatchModel],
                  equilibria) -> np.ndarray:
    """Concatenated disconnected equilibrium for the given pattern."""
    parts = []
    for choice, eqs in zip(pattern.choices, equilibria):
        if not 0 <= choice < len(eqs):
            raise ValueError(f"pattern choice {choice} out of range")
        parts.append(eqs[choice].state.concat())
    return np.concatenate(parts)


def continue_branch(pattern: EquilibriumPattern,
                    models: Sequence[PatchModel],
                    net: MobilityNetwork,
                    alpha_targets: Sequence[float],
                    equilibria=None,
                    refine_exit: bool = False,
                    stop_at_exit: bool = True) -> BranchRecord:
    """Natural continuation of one product pattern over an alpha grid.

    The predictor is the previous point plus an Euler step using the
    exact branch slope -J^{-1} L(X); the corrector is damped Newton.
    Stops at the first point with a component below -1e-9 (recording
    exit_alpha) or at corrector failure (partial record with diagnostic).
    With stop_at_exit False the grid is finished anyway (the branch is a
    smooth curve regardless of the cone); exit_alpha still marks the
    first violation. Derivative cross-checks need this to reach their
    full difference stencil when a pattern vanishes immediately.
    """
    if equilibria is None:
        equilibria = [patch_equilibria(mod) for mod in models]
    targets = sorted(float(a) for a in alpha_targets)
    if targets and targets[0] < 0.0:
        raise ValueError("alpha targets must be nonnegative")
    targets = [a for a in targets if a > 0.0]

    X0 = product_state(pattern, models, equilibria)
    J0 = coupled_jacobian(models, net, 0.0, X0)
    if matalg.condition_estimate(J0) > matalg.COND_LIMIT:
        raise HypothesisViolationError(
            "theorem hypothesis violated: coupled Jacobian singular at "
            f"alpha = 0 for pattern {pattern.choices}")

    if pattern.is_dfe:
        return _continue_dfe(pattern, models, net, targets)

    r0 = float(np.max(np.abs(coupled_residual(models, net, 0.0, X0))))
    points = [_accept(models, net, 0.0, X0, r0)]
    exit_alpha = None
    failure = None
    prev_alpha, prev_X = 0.0, X0
    for alpha in targets:
        try:
            slope = matalg.solve_linear(
                coupled_jacobian(models, net, prev_alpha, prev_X),
                -travel_operator(net, prev_X))
            predictor = prev_X + (alpha - prev_alpha) * slope
        except matalg.SingularMatrixError:
            predictor = prev_X
        try:
            X, rnorm = _newton_correct(models, net, alpha, predictor)
        except CorrectionFailureError as exc:
            failure = str(exc)
            break
        points.append(_accept(models, net, alpha, X, rnorm))
        if points[-1].min_component < SIGN_EXIT_TOL and exit_alpha is None:
            exit_alpha = alpha
            if refine_exit:
                exit_alpha = _refine_exit(models, net, prev_alpha, prev_X,
                                          alpha)
            if stop_at_exit:
                break
        prev_alpha, prev_X = alpha, X
    verdict = "vanishes" if exit_alpha is not None else "persists"
    return BranchRecord(pattern=pattern, points=points, exit_alpha=exit_alpha,
                        verdict_observed=verdict, failure=failure)


def _refine_exit(models, net, lo, X_lo, hi) -> float:
    """Bisect the first sign violation to about two significant digits."""
    for _ in range(40):
        if hi / max(lo, 1e-300) <= 1.05:
            break
        mid = np.sqrt(max(lo, hi * 1e-4) * hi) if lo == 0.0 else np.sqrt(lo * hi)
        try:
            X, _ = _newton_correct(models, net, mid, X_lo)
        except CorrectionFailureError:
            return hi
        if float(np.min(X)) < SIGN_EXIT_TOL:
            hi = mid
        else:
            lo, X_lo = mid, X
    return hi


def _continue_dfe(pattern, models, net, targets) -> BranchRecord:
    """DFE branch via the reduced susceptible subsystem.

    With the infected blocks pinned at zero the x and z equations hold
    exactly, so only the y-subsystem (affine for affine recruitment) is
    solved; the result is embedded with exact zeros. This keeps the
    continued DFE free of spurious infected-block drift.
    """
    n, m, k = _check_families(models, net)
    s = n + m + k
    r = net.r
    slices = _block_slices(r, n, m, k)

    def embed(Y):
        X = np.zeros(r * s)
        for i in range(r):
            X[slices[i][1]] = Y[i * m:(i + 1) * m]
        return X

    def solve_reduced(alpha, Y_guess):
        A = np.zeros((r * m, r * m))
        b = np.zeros(r * m)
        affine = all(mod.g_func is None for mod in models)
        outflow = net.cy.sum(axis=0)
        if affine:
            for i, mod in enumerate(models):
                A[i * m:(i + 1) * m, i * m:(i + 1) * m] = (
                    mod.g_lin - alpha * np.diag(outflow[i]))
                for j in range(r):
                    if j != i:
                        A[i * m:(i + 1) * m, j * m:(j + 1) * m] += (
                            alpha * np.diag(net.cy[i, j]))
                b[i * m:(i + 1) * m] = -mod.g_const
            return matalg.solve_linear(A, b)
        # general recruitment: damped Newton on the reduced residual
        Y = np.array(Y_guess, dtype=float)
        for _ in range(MAX_NEWTON_ITERS):
            res = np.concatenate([
                models[i].recruitment(Y[i * m:(i + 1) * m]) -
                alpha * outflow[i] * Y[i * m:(i + 1) * m] +
                alpha * sum(net.cy[i, j] * Y[j * m:(j + 1) * m]
                            for j in range(r) if j != i)
                for i in range(r)])
            if np.max(np.abs(res)) <= NEWTON_TOL:
                return Y
            Jr = _fd_reduced_jacobian(models, net, alpha, Y, m, r, outflow)
            Y = Y + matalg.solve_linear(Jr, -res)
        raise CorrectionFailureError(
            f"reduced susceptible solve stalled at alpha = {alpha:g}")

    Y = np.concatenate([_dfe_y(mod) for mod in models])
    points = []
    failure = None
    for alpha in [0.0] + targets:
        try:
            Y = solve_reduced(alpha, Y)
        except (matalg.SingularMatrixError, CorrectionFailureError) as exc:
            failure = str(exc)
            break
        X = embed(Y)
        rnorm = float(np.max(np.abs(coupled_residual(models, net, alpha, X))))
        points.append(_accept(models, net, alpha, X, rnorm))
    return BranchRecord(pattern=pattern, points=points, exit_alpha=None,
                        verdict_observed="persists", failure=failure)


def _dfe_y(mod: PatchModel) -> np.ndarray:
    from .equilibria import disease_free_equilibrium
    return disease_free_equilibrium(mod).state.y


def _fd_reduced_jacobian(models, net, alpha, Y, m, r, outflow):
    def res_of(Yv):
        return np.concatenate([
            models[i].recruitment(Yv[i * m:(i + 1) * m]) -
            alpha * outflow[i] * Yv[i * m:(i + 1) * m] +
            alpha * sum(net.cy[i, j] * Yv[j * m:(j + 1) * m]
                        for j in range(r) if j != i)
            for i in range(r)])
    base = res_of(Y)
    J = np.zeros((Y.size, Y.size))
    for c in range(Y.size):
        h = 1e-6 * (1.0 + abs(Y[c]))
        Yp = Y.copy()
        Yp[c] += h
        J[:, c] = (res_of(Yp) - base) / h
    return J


# ====================================================================
# Cross-checks and census
# ====================================================================

def branch_derivative_check(record: BranchRecord,
                            persist_derivative: BranchDerivative) -> float:
    """Relative discrepancy between the analytic branch derivative and
    finite differences of the continued branch on the DFAT x-block.

    Needs points at alpha in {0, h, 2h} with h <= 1e-6. Order 1 compares
    against the Richardson value 2 D(h) - D(2h); order 2 first checks the
    first difference vanishes and then compares the central second
    difference (f(0) - 2 f(h) + f(2h)) / h^2.
    """
    if len(record.points) < 3:
        raise ValueError("need branch points at alpha in {0, h, 2h}")
    p0, p1, p2 = record.points[:3]
    h = p1.alpha
    if p0.alpha != 0.0 or h > 1e-6 + 1e-18 or abs(p2.alpha - 2 * h) > 1e-15 * max(1.0, h):
        raise ValueError(
            f"grid ({p0.alpha:g}, {p1.alpha:g}, {p2.alpha:g}) is not "
            "(0, h, 2h) with h <= 1e-6")
    nblk = persist_derivative.value.size
    per_region = record.points[0].X.size // len(record.pattern.choices)
    sl = slice(persist_derivative.region * per_region,
               persist_derivative.region * per_region + nblk)
    f0, f1, f2 = p0.X[sl], p1.X[sl], p2.X[sl]
    if persist_derivative.order == 1:
        fd = 2.0 * (f1 - f0) / h - (f2 - f0) / (2.0 * h)
        ana = persist_derivative.value
    elif persist_derivative.order == 2:
        first = (f1 - f0) / h
        scale = max(float(np.max(np.abs(persist_derivative.value))) * h, 1e-12)
        if np.max(np.abs(first)) > 10.0 * scale:
            raise ValueError("first difference nonzero; order-2 check invalid")
        fd = (f0 - 2.0 * f1 + f2) / (h * h)
        ana = persist_derivative.value
    else:
        raise ValueError(f"unsupported derivative order {persist_derivative.order}")
    denom = float(np.max(np.abs(ana)))
    diff = float(np.max(np.abs(fd - ana)))
    if denom <= 1e-11:
        # zero analytic target: report the bare finite-difference size
        return diff
    return diff / denom


def count_stable(models: Sequence[PatchModel], net: MobilityNetwork,
                 alpha: float, equilibria=None):
    """(stable, unstable) tally over branches surviving at the given alpha."""
    from .equilibria import enumerate_patterns

    if equilibria is None:
        equilibria = [patch_equilibria(mod) for mod in models]
    counts = [len(eq) - 1 for eq in equilibria]
    ladder = [alpha / 100.0, alpha / 10.0, alpha]
    stable = unstable = 0
    for pattern in enumerate_patterns(counts):
        record = continue_branch(pattern, models, net, ladder,
                                 equilibria=equilibria)
        if record.failure is not None:
            raise CorrectionFailureError(
                f"pattern {pattern.choices}: {record.failure}")
        if record.verdict_observed != "persists":
            continue
        last = record.points[-1]
        if last.stability == "stable":
            stable += 1
        elif last.stability == "unstable":
            unstable += 1
    return stable, unstable
