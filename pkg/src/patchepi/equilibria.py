"""One-patch steady states and the disconnected-system census.

Finds the disease-free equilibrium in closed form, locates endemic
equilibria (scalar force-of-infection reduction for the HIV family,
multi-start Newton for everything else), classifies local stability,
detects the backward-bifurcation window, and enumerates the product
equilibria of r disconnected patches.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import matalg
from .model import (HivParams, InadmissibleStateError, PatchModel, PatchState,
                    hiv_vaccination, new_infection_operator, patch_jacobian,
                    patch_residual, split_state)

# Newton acceptance for a root, and merge distance for duplicates.
ROOT_RESIDUAL_TOL = 1e-9
ROOT_MERGE_TOL = 1e-7

# |max real eigenvalue| below this is a marginal equilibrium; those are
# excluded from continuation (the persistence theorem needs an invertible
# Jacobian).
STABILITY_MARGIN = 1e-9

# Scalar force-of-infection scan used for the HIV family.
LAMBDA_SCAN_LO = 1e-8
LAMBDA_SCAN_HI = 50.0
LAMBDA_SCAN_POINTS = 4000
LAMBDA_BISECT_TOL = 1e-12


class DegenerateModelError(RuntimeError):
    """Disease-free susceptible level missing, non-unique, or not positive."""


class NoFoldError(RuntimeError):
    """Root-count fold absent from the requested parameter sweep."""


@dataclass(frozen=True)
class PatchEquilibrium:
    """A classified steady state of one disconnected patch."""
    state: PatchState
    kind: str                 # "disease_free" | "endemic"
    index: int                # 0 for the DFE, 1..e for endemic states
    stability: str            # "stable" | "unstable" | "marginal"
    jac_invertible: bool


@dataclass(frozen=True)
class EquilibriumPattern:
    """Per-region equilibrium choice labeling one product steady state.

    choices[i] = 0 picks region i's DFE, otherwise its choices[i]-th
    endemic state (sorted by force of infection).
    """
    choices: tuple

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(int(c) for c in self.choices))

    @property
    def is_dfe(self) -> bool:
        return all(c == 0 for c in self.choices)

    @property
    def is_all_endemic(self) -> bool:
        return all(c > 0 for c in self.choices)


@dataclass(frozen=True)
class BifurcationReport:
    """Endemic-root census of one patch.

    Regimes: below_Rc (no endemic states), backward_window (two positive
    roots while R < 1), above_one (the unique root beyond the threshold).
    """
    R_local: float
    regime: str
    endemic_lambdas: tuple
    R_c_estimate: Optional[float] = None


# ====================================================================
# Reproduction number and DFE
# ====================================================================

def disease_free_equilibrium(model: PatchModel) -> PatchEquilibrium:
    """The unique steady state with all infected and removed classes zero.

    For affine recruitment y0 solves g_const + g_lin y = 0 directly; a
    custom g_func is solved by damped Newton from the affine seed.
    """
    y0 = _susceptible_equilibrium(model)
    state = PatchState(np.zeros(model.n), y0, np.zeros(model.k))
    stability, invertible = _classify(model, state)
    return PatchEquilibrium(state=state, kind="disease_free", index=0,
                            stability=stability, jac_invertible=invertible)


def _susceptible_equilibrium(model: PatchModel) -> np.ndarray:
    try:
        y0 = matalg.solve_linear(-model.g_lin, model.g_const)
    except matalg.SingularMatrixError as exc:
        raise DegenerateModelError(
            "disease-free susceptible level is not unique") from exc
    if model.g_func is not None:
        y0 = _newton_on(lambda y: model.recruitment(y), y0)
    if np.any(y0 <= 0):
        raise DegenerateModelError(
            f"disease-free susceptible level not positive: {y0}")
    return y0


def _newton_on(fun, y0, tol=1e-12, maxit=100):
    y = np.asarray(y0, dtype=float).copy()
    for _ in range(maxit):
        f = fun(y)
        if np.max(np.abs(f)) < tol:
            return y
        J = _fd_jac_vec(fun, y)
        y = y + np.linalg.solve(J, -f)
    raise DegenerateModelError("susceptible-equilibrium Newton did not converge")


def _fd_jac_vec(fun, y, h=1e-7):
    nn = y.size
    J = np.zeros((nn, nn))
    for j in range(nn):
        step = h * (1.0 + abs(y[j]))
        up, um = y.copy(), y.copy()
        up[j] += step
        um[j] -= step
        J[:, j] = (fun(up) - fun(um)) / (2.0 * step)
    return J


def local_reproduction_number(model: PatchModel) -> float:
    """Spectral radius of F V^{-1} with F evaluated at the patch DFE."""
    y0 = _susceptible_equilibrium(model)
    dfe_state = PatchState(np.zeros(model.n), y0, np.zeros(model.k))
    F = new_infection_operator(model, dfe_state)
    FVinv = np.linalg.solve(model.V.T, F.T).T
    return matalg.spectral_radius(FVinv)


def _classify(model: PatchModel, state: PatchState) -> tuple:
    J = patch_jacobian(model, state)
    eigs = matalg.eigen_spectrum(J)
    max_re = float(np.max(eigs.real))
    if abs(max_re) < STABILITY_MARGIN:
        stability = "marginal"
    elif max_re < 0:
        stability = "stable"
    else:
        stability = "unstable"
    invertible = matalg.condition_estimate(J) < matalg.COND_LIMIT
    return stability, invertible


# ====================================================================
# HIV endemic equilibria via the scalar force-of-infection reduction
# ====================================================================

def hiv_state_from_lambda(params: HivParams, lam: float) -> PatchState:
    """Back-substitute a force of infection into the full steady state."""
    pr = params
    SV = pr.p * pr.Lam / (pr.mu + pr.q * lam + pr.gam)
    S = ((1.0 - pr.p) * pr.Lam + pr.gam * SV) / (pr.mu + lam)
    Y1 = pr.rho1 * lam * S / (pr.mu + pr.sig1)
    Y2 = pr.rho2 * lam * S / (pr.mu + pr.sig2)
    W1 = pr.pi1 * pr.q * lam * SV / (pr.mu + pr.th1 * pr.sig1)
    W2 = pr.pi2 * pr.q * lam * SV / (pr.mu + pr.th2 * pr.sig2)
    A = (pr.sig1 * Y1 + pr.sig2 * Y2 + pr.th1 * pr.sig1 * W1
         + pr.th2 * pr.sig2 * W2) / (pr.delta + pr.mu)
    return PatchState(np.array([Y1, Y2, W1, W2]), np.array([S, SV]),
                      np.array([A]))


def _hiv_scalar_residual(params: HivParams, lam: float) -> float:
    pr = params
    s = hiv_state_from_lambda(params, lam)
    Y1, Y2, W1, W2 = s.x
    N = float(np.sum(s.y) + np.sum(s.x))
    foi = (pr.beta1 * (Y1 + pr.s1 * W1) + pr.beta2 * (Y2 + pr.s2 * W2)) / N
    return lam - foi


def hiv_lambda_roots(params: HivParams) -> list:
    """All positive roots of the scalar steady-state residual.

    Logarithmic scan followed by bisection; the residual has at most a few
    isolated roots, so robustness beats speed here.
    """
    grid = np.geomspace(LAMBDA_SCAN_LO, LAMBDA_SCAN_HI, LAMBDA_SCAN_POINTS)
    vals = np.array([_hiv_scalar_residual(params, lam) for lam in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0.0:
            lo, hi, flo = a, b, fa
            while hi - lo > LAMBDA_BISECT_TOL:
                mid = 0.5 * (lo + hi)
                fmid = _hiv_scalar_residual(params, mid)
                if flo * fmid <= 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fmid
            roots.append(0.5 * (lo + hi))
    return roots


def endemic_equilibria_hiv(params: HivParams) -> BifurcationReport:
    """Endemic-root census of one HIV patch.

    An empty root list is a valid outcome (below the backward window).
    """
    model = hiv_vaccination(params)
    R = local_reproduction_number(model)
    roots = tuple(sorted(hiv_lambda_roots(params)))
    regime = _regime_from(R, len(roots))
    return BifurcationReport(R_local=R, regime=regime, endemic_lambdas=roots)


def _regime_from(R: float, nroots: int) -> str:
    if nroots == 0:
        return "below_Rc"
    if nroots == 2 and R < 1.0:
        return "backward_window"
    if nroots == 1:
        return "above_one"
    raise RuntimeError(
        f"unclassifiable root census: R={R}, {nroots} positive roots")


def estimate_Rc(params: HivParams, bifurcation_param: str = "beta1",
                param_range: tuple = (0.5, 0.85)) -> float:
    """Locate the fold of the backward bifurcation.

    Bisects the named parameter on the 0-to-2 change in the number of
    positive roots (relative accuracy 1e-6 on the parameter) and returns
    the local reproduction number at the fold.
    """
    lo, hi = map(float, param_range)

    def count(p):
        return len(hiv_lambda_roots(replace(params, **{bifurcation_param: p})))

    c_lo, c_hi = count(lo), count(hi)
    if {c_lo, c_hi} != {0, 2}:
        raise NoFoldError(
            f"sweep of {bifurcation_param} over {param_range} does not bracket "
            f"the fold (root counts {c_lo} and {c_hi})")
    # orient so that lo has no roots
    if c_lo == 2:
        lo, hi = hi, lo
    while abs(hi - lo) > 1e-6 * max(abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if count(mid) == 0:
            lo = mid
        else:
            hi = mid
    fold_param = 0.5 * (lo + hi)
    model = hiv_vaccination(replace(params, **{bifurcation_param: fold_param}))
    return local_reproduction_number(model)


def bifurcation_report(model: PatchModel,
                       estimate_fold: bool = True) -> BifurcationReport:
    """Root census and regime of one patch, any family.

    The HIV family gets its force-of-infection roots and, inside the
    backward window, a fold estimate from a parameter sweep below the
    configured transmission rate. Other families classify the regime
    from the endemic root count alone.
    """
    if model.family == "hiv_vaccination":
        params = HivParams(**model.params)
        report = endemic_equilibria_hiv(params)
        if estimate_fold and report.regime == "backward_window":
            try:
                rc = estimate_Rc(params, "beta1",
                                 (0.5 * params.beta1, params.beta1))
            except NoFoldError:
                rc = None
            return replace(report, R_c_estimate=rc)
        return report
    R = local_reproduction_number(model)
    roots, _ = endemic_equilibria_generic(model)
    return BifurcationReport(R_local=R, regime=_regime_from(R, len(roots)),
                             endemic_lambdas=())


# ====================================================================
# Generic endemic equilibria by multi-start Newton
# ====================================================================

def endemic_equilibria_generic(model: PatchModel) -> tuple:
    """Strictly positive steady states from a deterministic seed grid.

    Returns (equilibria, discarded) where discarded counts seeds whose
    Newton iteration failed to converge or converged outside the open
    positive cone; those are dropped silently by design.
    """
    y0 = _susceptible_equilibrium(model)
    scale = float(np.sum(y0))
    grid = [0.1 * scale, 1.0 * scale, 10.0 * scale]
    nn = model.size
    u_dfe = PatchState(np.zeros(model.n), y0, np.zeros(model.k)).concat()
    roots = []
    discarded = 0
    for combo in itertools.product(grid, repeat=nn):
        u = _damped_newton(model, np.array(combo))
        if u is None:
            discarded += 1
            continue
        # the open positive cone only; a seed that slid back to the DFE
        # (x numerically zero) is the disease-free root, and a root pinned
        # to any face of the cone (a component at Newton roundoff scale)
        # is a boundary state outside the endemic dichotomy
        floor = ROOT_MERGE_TOL * (1.0 + float(np.max(np.abs(u))))
        if np.any(u <= floor) or _state_distance(u, u_dfe) <= ROOT_MERGE_TOL:
            discarded += 1
            continue
        if not any(_state_distance(u, v) <= ROOT_MERGE_TOL for v in roots):
            roots.append(u)
    roots.sort(key=lambda u: float(np.sum(u[:model.n])))
    out = []
    for idx, u in enumerate(roots, start=1):
        state = split_state(model, u)
        stability, invertible = _classify(model, state)
        out.append(PatchEquilibrium(state=state, kind="endemic", index=idx,
                                    stability=stability,
                                    jac_invertible=invertible))
    return out, discarded


def _state_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))
                 / (1.0 + max(np.max(np.abs(a)), np.max(np.abs(b)))))


def _damped_newton(model: PatchModel, u0: np.ndarray, maxit: int = 80):
    u = u0.astype(float).copy()

    def res(v):
        try:
            return patch_residual(model, split_state(model, v))
        except InadmissibleStateError:
            return None

    r = res(u)
    if r is None:
        return None
    for _ in range(maxit):
        norm = np.max(np.abs(r))
        if norm <= ROOT_RESIDUAL_TOL:
            # polish: keep iterating while the residual still improves
            for _ in range(4):
                try:
                    J = patch_jacobian(model, split_state(model, u))
                    du = np.linalg.solve(J, -r)
                except (np.linalg.LinAlgError, InadmissibleStateError):
                    break
                r2 = res(u + du)
                if r2 is None or np.max(np.abs(r2)) >= norm:
                    break
                u, r, norm = u + du, r2, np.max(np.abs(r2))
            return u
        if not np.isfinite(norm) or norm > 1e12:
            return None
        try:
            J = patch_jacobian(model, split_state(model, u))
            du = np.linalg.solve(J, -r)
        except (np.linalg.LinAlgError, InadmissibleStateError):
            return None
        # Armijo backtracking on the squared residual norm
        base = float(r @ r)
        step = 1.0
        for _ in range(20):
            r_new = res(u + step * du)
            if r_new is not None and float(r_new @ r_new) <= (1 - 1e-4 * step) * base:
                break
            step *= 0.5
        else:
            return None
        u = u + step * du
        r = r_new
    return None


# ====================================================================
# Product-system census
# ====================================================================

def patch_equilibria(model: PatchModel) -> list:
    """DFE plus endemic states of one patch, as classified equilibria.

    The HIV family goes through the scalar force-of-infection reduction;
    other families use the generic multi-start Newton.
    """
    out = [disease_free_equilibrium(model)]
    if model.family == "hiv_vaccination":
        params = HivParams(**model.params)
        for idx, lam in enumerate(sorted(hiv_lambda_roots(params)), start=1):
            state = hiv_state_from_lambda(params, lam)
            stability, invertible = _classify(model, state)
            out.append(PatchEquilibrium(state=state, kind="endemic", index=idx,
                                        stability=stability,
                                        jac_invertible=invertible))
    else:
        endemic, _ = endemic_equilibria_generic(model)
        out.extend(endemic)
    return out


def enumerate_patterns(counts: Sequence[int]) -> list:
    """All product patterns over per-region endemic counts, DFE first.

    Returns the full lexicographic list of prod(e_i + 1) patterns; the
    all-zero entry is the DFE pattern.
    """
    counts = [int(e) for e in counts]
    if any(e < 0 for e in counts):
        raise ValueError("endemic counts must be nonnegative")
    return [EquilibriumPattern(choices)
            for choices in itertools.product(*[range(e + 1) for e in counts])]
