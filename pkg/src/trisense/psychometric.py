"""Psychometric-function families and maximum-likelihood fitting for 2IFC data.

The response model is psi(x) = gamma + (1 - gamma - lambda) * F(x; alpha, beta)
with guess rate gamma (0.5 for two-interval forced choice), lapse rate lambda,
and a monotone base function F chosen from five standard families. Thresholds
are read off the inverse of psi, slopes are d(psi)/dx at the 75% point, and
uncertainty / goodness of fit come from parametric simulation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.optimize
from scipy.special import expit, logit, ndtr, ndtri

_LN10 = math.log(10.0)
_PSI_CLIP = 1e-12
_EXP_CLIP = 700.0


class PsychometricError(Exception):
    """Base class for fitting errors."""


class NonIdentifiableError(PsychometricError):
    """All responses correct or all incorrect: the fit is unconstrained."""


class InsufficientLevelsError(PsychometricError):
    """Fewer than two distinct stimulus levels."""


class OutOfRangeError(PsychometricError):
    """Requested probability outside the open interval (gamma, 1 - lambda)."""


class TooManyFailuresError(PsychometricError):
    """More than 10% of bootstrap refits were non-identifiable."""


class PFFamily(str, Enum):
    LOGISTIC = "logistic"
    WEIBULL = "weibull"
    GUMBEL = "gumbel"
    CUMULATIVE_NORMAL = "cumulative_normal"
    HYPERBOLIC_SECANT = "hyperbolic_secant"


class LapsePolicy(str, Enum):
    FIXED_ZERO = "fixed_zero"   # lambda pinned at 0
    FREE = "free"               # lambda estimated, capped at 0.05

MAX_LAPSE = 0.05


class PresentationOrder(str, Enum):
    PEDESTAL_FIRST = "P"
    VARYING_FIRST = "V"


@dataclass(frozen=True)
class TrialRecord:
    """One 2IFC comparison of a varying stimulus against a fixed pedestal."""

    stimulus: float   # ppm
    pedestal: float   # ppm
    correct: bool
    order: PresentationOrder = PresentationOrder.VARYING_FIRST

    def __post_init__(self) -> None:
        if self.stimulus < self.pedestal:
            raise ValueError(
                f"varying stimulus {self.stimulus} below pedestal {self.pedestal}")


@dataclass(frozen=True)
class PsychometricFit:
    family: PFFamily
    alpha: float               # location parameter (ppm)
    beta: float                # slope/shape parameter (> 0)
    gamma: float               # guess rate (0.5 for 2IFC)
    lapse: float               # lapse rate lambda, in [0, 0.05]
    log_likelihood: float
    n_trials: int
    lapse_policy: LapsePolicy = LapsePolicy.FIXED_ZERO

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 <= self.lapse <= MAX_LAPSE + 1e-12:
            raise ValueError(f"lapse must lie in [0, {MAX_LAPSE}]")


@dataclass(frozen=True)
class GofResult:
    deviance: float
    p_value: float
    n_sim: int


# --- base function F(x; a, b), its inverse in q, and partial derivatives ----

def _sech(z: np.ndarray) -> np.ndarray:
    az = np.abs(z)
    e = np.exp(-np.minimum(az, _EXP_CLIP))
    return 2.0 * e / (1.0 + e * e)


def _base(family: PFFamily, x: np.ndarray, a: float, b: float) -> np.ndarray:
    if family is PFFamily.LOGISTIC:
        return expit(b * (x - a))
    if family is PFFamily.WEIBULL:
        xa = np.maximum(x, 0.0) / a
        t = np.where(xa > 0, xa ** b, 0.0)
        return -np.expm1(-t)
    if family is PFFamily.GUMBEL:
        g = np.exp(np.minimum(b * (x - a) * _LN10, _EXP_CLIP))
        return -np.expm1(-g)
    if family is PFFamily.CUMULATIVE_NORMAL:
        return ndtr(b * (x - a))
    if family is PFFamily.HYPERBOLIC_SECANT:
        z = 0.5 * math.pi * b * (x - a)
        return (2.0 / math.pi) * np.arctan(np.exp(np.minimum(z, _EXP_CLIP)))
    raise ValueError(f"unknown family {family}")


def _base_inverse(family: PFFamily, q: float, a: float, b: float) -> float:
    if family is PFFamily.LOGISTIC:
        return a + float(logit(q)) / b
    if family is PFFamily.WEIBULL:
        return a * (-math.log1p(-q)) ** (1.0 / b)
    if family is PFFamily.GUMBEL:
        return a + math.log10(-math.log1p(-q)) / b
    if family is PFFamily.CUMULATIVE_NORMAL:
        return a + float(ndtri(q)) / b
    if family is PFFamily.HYPERBOLIC_SECANT:
        return a + 2.0 / (math.pi * b) * math.log(math.tan(0.5 * math.pi * q))
    raise ValueError(f"unknown family {family}")


def _base_dx(family: PFFamily, x: np.ndarray, a: float, b: float) -> np.ndarray:
    if family is PFFamily.LOGISTIC:
        f = expit(b * (x - a))
        return b * f * (1.0 - f)
    if family is PFFamily.WEIBULL:
        xa = np.maximum(x, 0.0) / a
        t = np.where(xa > 0, xa ** b, 0.0)
        return np.where(x > 0, np.exp(-t) * b * t / np.maximum(x, 1e-300), 0.0)
    if family is PFFamily.GUMBEL:
        g = np.exp(np.minimum(b * (x - a) * _LN10, _EXP_CLIP))
        return np.exp(-g) * g * b * _LN10
    if family is PFFamily.CUMULATIVE_NORMAL:
        z = b * (x - a)
        return b * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    if family is PFFamily.HYPERBOLIC_SECANT:
        z = 0.5 * math.pi * b * (x - a)
        return 0.5 * b * _sech(z)
    raise ValueError(f"unknown family {family}")


def _base_grad_ab(family: PFFamily, x: np.ndarray, a: float,
                  b: float) -> tuple[np.ndarray, np.ndarray]:
    """(dF/da, dF/db) evaluated elementwise."""
    if family is PFFamily.LOGISTIC:
        f = expit(b * (x - a))
        w = f * (1.0 - f)
        return -b * w, (x - a) * w
    if family is PFFamily.WEIBULL:
        xa = np.maximum(x, 0.0) / a
        t = np.where(xa > 0, xa ** b, 0.0)
        e = np.exp(-t)
        dfda = -e * b * t / a
        with np.errstate(divide="ignore"):
            logxa = np.where(xa > 0, np.log(np.maximum(xa, 1e-300)), 0.0)
        dfdb = e * t * logxa
        return dfda, dfdb
    if family is PFFamily.GUMBEL:
        g = np.exp(np.minimum(b * (x - a) * _LN10, _EXP_CLIP))
        w = np.exp(-g) * g * _LN10
        return -b * w, (x - a) * w
    if family is PFFamily.CUMULATIVE_NORMAL:
        z = b * (x - a)
        phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return -b * phi, (x - a) * phi
    if family is PFFamily.HYPERBOLIC_SECANT:
        z = 0.5 * math.pi * b * (x - a)
        s = _sech(z)
        return -0.5 * b * s, 0.5 * (x - a) * s
    raise ValueError(f"unknown family {family}")


# --- evaluation, inversion, slope ------------------------------------------

def eval_pf(fit: PsychometricFit, x):
    """psi(x) = gamma + (1 - gamma - lambda) * F(x; alpha, beta)."""
    arr = np.asarray(x, dtype=float)
    psi = fit.gamma + (1.0 - fit.gamma - fit.lapse) * _base(
        fit.family, arr, fit.alpha, fit.beta)
    return float(psi) if np.isscalar(x) or arr.ndim == 0 else psi


def threshold_at(fit: PsychometricFit, p: float = 0.75) -> float:
    """Stimulus level where psi crosses p (closed-form inverse per family)."""
    if not fit.gamma < p < 1.0 - fit.lapse:
        raise OutOfRangeError(
            f"p={p} not strictly inside ({fit.gamma}, {1.0 - fit.lapse})")
    q = (p - fit.gamma) / (1.0 - fit.gamma - fit.lapse)
    return _base_inverse(fit.family, q, fit.alpha, fit.beta)


def slope_at_threshold(fit: PsychometricFit) -> float:
    """d(psi)/dx at the 75% performance point, in performance per ppm."""
    t = threshold_at(fit, 0.75)
    scale = 1.0 - fit.gamma - fit.lapse
    return float(scale * _base_dx(fit.family, np.asarray(t), fit.alpha, fit.beta))


# --- fitting ----------------------------------------------------------------

def _aggregate(trials: Sequence[TrialRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse trials to unique levels: (x, n per level, correct per level)."""
    stims = np.array([t.stimulus for t in trials], dtype=float)
    corr = np.array([t.correct for t in trials], dtype=float)
    x = np.unique(stims)
    n = np.zeros_like(x)
    k = np.zeros_like(x)
    for j, xx in enumerate(x):
        mask = stims == xx
        n[j] = mask.sum()
        k[j] = corr[mask].sum()
    return x, n, k


def _nll_and_grad(params: np.ndarray, family: PFFamily, x: np.ndarray,
                  n: np.ndarray, k: np.ndarray, gamma: float,
                  free_lapse: bool) -> tuple[float, np.ndarray]:
    a = params[0]
    b = math.exp(params[1])
    lam = params[2] if free_lapse else 0.0
    scale = 1.0 - gamma - lam
    F = _base(family, x, a, b)
    psi = np.clip(gamma + scale * F, _PSI_CLIP, 1.0 - _PSI_CLIP)
    nll = -float(np.sum(k * np.log(psi) + (n - k) * np.log(1.0 - psi)))
    r = k / psi - (n - k) / (1.0 - psi)
    dfda, dfdb = _base_grad_ab(family, x, a, b)
    grad_a = -float(np.sum(r * scale * dfda))
    grad_logb = -float(np.sum(r * scale * dfdb)) * b
    if free_lapse:
        grad_lam = float(np.sum(r * F))  # d(psi)/d(lambda) = -F
        return nll, np.array([grad_a, grad_logb, grad_lam])
    return nll, np.array([grad_a, grad_logb])


def _start_points(family: PFFamily, x: np.ndarray, n_starts: int) -> list[tuple[float, float]]:
    span = float(x.max() - x.min())
    n_alpha = max(1, n_starts // 2)
    alphas = np.linspace(x.min(), x.max(), n_alpha)
    if family is PFFamily.WEIBULL:
        betas = (1.5, 5.0)
    else:
        betas = (2.0 / span, 8.0 / span)
    return [(float(a0), float(b0)) for b0 in betas for a0 in alphas][:max(n_starts, 1)]


_BETA_BOUNDS = (1e-2, 25.0)  # slopes outside this range are not resolvable
                             # by a handful of levels spaced ~0.4 ppm apart


def _param_bounds(family: PFFamily, x: np.ndarray) -> tuple[tuple[float, float],
                                                             tuple[float, float]]:
    span = float(x.max() - x.min())
    a_lo, a_hi = float(x.min()) - span, float(x.max()) + span
    if family is PFFamily.WEIBULL:
        a_lo = max(a_lo, 0.05 * float(x.min()), 1e-6)
    return (a_lo, a_hi), (math.log(_BETA_BOUNDS[0]), math.log(_BETA_BOUNDS[1]))


def _fit_levels(x: np.ndarray, n: np.ndarray, k: np.ndarray, family: PFFamily,
                lapse_policy: LapsePolicy, gamma: float, n_starts: int,
                warm_start: Optional[tuple[float, float, float]] = None,
                n_trials: Optional[int] = None) -> PsychometricFit:
    (a_lo, a_hi), lb_bounds = _param_bounds(family, x)
    free_lapse = lapse_policy is LapsePolicy.FREE
    bounds = [(a_lo, a_hi), lb_bounds]
    if free_lapse:
        bounds.append((0.0, MAX_LAPSE))

    starts: list[np.ndarray] = []
    if warm_start is not None:
        a0, b0, l0 = warm_start
        s = [np.clip(a0, a_lo, a_hi), np.clip(math.log(b0), *bounds[1])]
        if free_lapse:
            s.append(np.clip(l0, 0.0, MAX_LAPSE))
        starts.append(np.array(s))
    for a0, b0 in _start_points(family, x, n_starts):
        s = [np.clip(a0, a_lo, a_hi), np.clip(math.log(b0), *bounds[1])]
        if free_lapse:
            s.append(0.01)
        starts.append(np.array(s))

    best = None
    for s0 in starts:
        res = scipy.optimize.minimize(
            _nll_and_grad, s0, args=(family, x, n, k, gamma, free_lapse),
            jac=True, method="L-BFGS-B", bounds=bounds,
            options={"ftol": 1e-13, "gtol": 1e-10, "maxiter": 300})
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None
    lam = float(best.x[2]) if free_lapse else 0.0
    return PsychometricFit(
        family=family, alpha=float(best.x[0]), beta=math.exp(float(best.x[1])),
        gamma=gamma, lapse=lam, log_likelihood=-float(best.fun),
        n_trials=int(n_trials if n_trials is not None else n.sum()),
        lapse_policy=lapse_policy)


def fit_pf(trials: Sequence[TrialRecord], family: PFFamily = PFFamily.LOGISTIC,
           lapse_policy: LapsePolicy = LapsePolicy.FIXED_ZERO,
           gamma: float = 0.5, n_starts: int = 10) -> PsychometricFit:
    """Maximum-likelihood fit of (alpha, beta[, lambda]) with gamma fixed.

    Deterministic: multi-starts are laid out on a fixed grid over the stimulus
    range, so identical inputs always give identical fits.
    """
    x, n, k = _aggregate(trials)
    if len(x) < 2:
        raise InsufficientLevelsError(
            f"need >= 2 distinct stimulus levels, got {len(x)}")
    total_k, total_n = k.sum(), n.sum()
    if total_k == 0 or total_k == total_n:
        raise NonIdentifiableError("all responses correct or all incorrect")
    return _fit_levels(x, n, k, family, lapse_policy, gamma, n_starts)


def simulate_trials(fit: PsychometricFit, stimuli: Sequence[float],
                    trials_per_level: int, rng: np.random.Generator,
                    pedestal: Optional[float] = None) -> list[TrialRecord]:
    """Draw synthetic 2IFC responses from a fitted (or constructed) observer."""
    ped = pedestal if pedestal is not None else min(stimuli)
    out: list[TrialRecord] = []
    for x in stimuli:
        p = eval_pf(fit, x)
        for _ in range(trials_per_level):
            order = PresentationOrder.PEDESTAL_FIRST if rng.random() < 0.5 \
                else PresentationOrder.VARYING_FIRST
            out.append(TrialRecord(x, ped, bool(rng.random() < p), order))
    return out


# --- batched refitting for parametric simulation ----------------------------
#
# Bootstrap and Monte-Carlo goodness of fit refit thousands of simulated
# datasets that share one stimulus design. Damped Fisher scoring over
# (alpha, log beta), vectorized across datasets, is ~50x faster than looping
# the general optimizer; rows that fail to converge fall back to it.

def _batch_nll(family: PFFamily, x: np.ndarray, n: np.ndarray, K: np.ndarray,
               gamma: float, a: np.ndarray, lb: np.ndarray) -> np.ndarray:
    F = _base(family, x[None, :], a[:, None], np.exp(lb)[:, None])
    psi = np.clip(gamma + (1.0 - gamma) * F, _PSI_CLIP, 1.0 - _PSI_CLIP)
    return -(K * np.log(psi) + (n[None, :] - K) * np.log(1.0 - psi)).sum(axis=1)


def _batch_refit(x: np.ndarray, n: np.ndarray, K: np.ndarray, family: PFFamily,
                 gamma: float, warm: tuple[float, float],
                 max_iter: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """MLE (alpha, beta) for each row of simulated correct-counts K.

    The likelihood is often multimodal (shallow modes, plus steep modes
    pinned near the beta bound with very narrow basins), so scoring runs
    from several starts per row - the generating parameters, steep starts
    at the empirical 75% crossings and shallow starts at the range ends -
    and the step-function modes are additionally scanned outright.
    """
    (a_lo, a_hi), (lb_lo, lb_hi) = _param_bounds(family, x)
    n_rows = K.shape[0]
    prop = K / n[None, :]
    first_cross = np.where(prop >= 0.75, x[None, :], np.inf).min(axis=1)
    first_cross = np.where(np.isfinite(first_cross), first_cross, x[-1])
    last_below = np.where(prop < 0.75, x[None, :], -np.inf).max(axis=1)
    last_below = np.where(np.isfinite(last_below), last_below, x[0])
    gap = float(np.diff(x).min()) if len(x) > 1 else 1.0
    span = max(float(x.max() - x.min()), 1e-6)
    shallow = math.log(2.0 / span) if family is not PFFamily.WEIBULL \
        else math.log(1.5)
    shallow = np.clip(shallow, lb_lo, lb_hi)
    starts = [
        (np.full(n_rows, warm[0]), np.full(n_rows, math.log(warm[1]))),
        (first_cross, np.full(n_rows, lb_hi - 0.5)),
        (last_below + 0.5 * gap, np.full(n_rows, lb_hi - 0.5)),
        (np.full(n_rows, float(x.min())), np.full(n_rows, float(shallow))),
        (np.full(n_rows, float(x.max())), np.full(n_rows, float(shallow))),
    ]
    results = [_batch_scoring(x, n, K, family, gamma, a0, lb0,
                              (a_lo, a_hi), (lb_lo, lb_hi), max_iter)
               for a0, lb0 in starts]
    best_a, best_lb, best_nll = results[0]
    for a, lb, cur in results[1:]:
        better = cur < best_nll - 1e-12
        best_a = np.where(better, a, best_a)
        best_lb = np.where(better, lb, best_lb)
        best_nll = np.minimum(cur, best_nll)
    # rows where some start ended away from the winner have ambiguous or
    # stalled basins; they always get the general optimizer
    disagree = np.zeros(n_rows, dtype=bool)
    for a, lb, _ in results:
        disagree |= (np.abs(a - best_a) + np.abs(lb - best_lb)) > 1e-2
    # near-step modes at the beta cap have very narrow basins, but their
    # candidate locations lie between adjacent levels: scan the quartile
    # positions of every inter-level interval outright
    edges = np.concatenate(([x[0] - np.diff(x)[0]], x,
                            [x[-1] + np.diff(x)[-1]]))
    mids = np.concatenate([lo + (hi - lo) * np.array([0.25, 0.5, 0.75])
                           for lo, hi in zip(edges[:-1], edges[1:])])
    mids = np.clip(mids, a_lo, a_hi)
    F_c = _base(family, x[None, None, :], mids[:, None, None],
                math.exp(lb_hi))
    psi_c = np.clip(gamma + (1.0 - gamma) * F_c, _PSI_CLIP, 1.0 - _PSI_CLIP)
    cand = -(K[None, :, :] * np.log(psi_c)
             + (n[None, None, :] - K[None, :, :])
             * np.log(1.0 - psi_c)).sum(axis=2)          # (candidates, rows)
    best_c = cand.argmin(axis=0)
    steep_better = cand.min(axis=0) < best_nll - 1e-9
    best_a = np.where(steep_better, mids[best_c], best_a)
    best_lb = np.where(steep_better, lb_hi, best_lb)
    return _polish_rows(x, n, K, family, gamma, best_a, best_lb,
                        (a_lo, a_hi), (lb_lo, lb_hi),
                        force=disagree | steep_better)


def _batch_scoring(x, n, K, family, gamma, a0, lb0, a_bounds, lb_bounds,
                   max_iter):
    a_lo, a_hi = a_bounds
    lb_lo, lb_hi = lb_bounds
    a = np.clip(a0.astype(float), a_lo, a_hi)
    lb = np.clip(lb0.astype(float), lb_lo, lb_hi)
    n_rows = K.shape[0]
    cur = _batch_nll(family, x, n, K, gamma, a, lb)
    scale = 1.0 - gamma
    for _ in range(max_iter):
        b = np.exp(lb)
        F = _base(family, x[None, :], a[:, None], b[:, None])
        psi = np.clip(gamma + scale * F, _PSI_CLIP, 1.0 - _PSI_CLIP)
        var = psi * (1.0 - psi)
        resid = (K - n[None, :] * psi) / var
        dfda, dfdb = _base_grad_ab(family, x[None, :], a[:, None], b[:, None])
        da_psi = scale * dfda
        dlb_psi = scale * dfdb * b[:, None]
        s1 = (resid * da_psi).sum(axis=1)
        s2 = (resid * dlb_psi).sum(axis=1)
        w = n[None, :] / var
        i11 = (w * da_psi * da_psi).sum(axis=1)
        i12 = (w * da_psi * dlb_psi).sum(axis=1)
        i22 = (w * dlb_psi * dlb_psi).sum(axis=1)
        det = np.maximum(i11 * i22 - i12 * i12, 1e-300)
        step_a = (i22 * s1 - i12 * s2) / det
        step_lb = (i11 * s2 - i12 * s1) / det
        damp = np.ones(n_rows)
        for _ in range(30):
            a_new = np.clip(a + damp * step_a, a_lo, a_hi)
            lb_new = np.clip(lb + damp * step_lb, lb_lo, lb_hi)
            new = _batch_nll(family, x, n, K, gamma, a_new, lb_new)
            worse = new > cur + 1e-12
            if not worse.any():
                break
            damp = np.where(worse, damp * 0.5, damp)
        accept = new <= cur + 1e-12
        a_next = np.where(accept, a_new, a)
        lb_next = np.where(accept, lb_new, lb)
        moved = np.maximum(np.abs(a_next - a), np.abs(lb_next - lb))
        a, lb = a_next, lb_next
        cur = np.where(accept, new, cur)
        if moved.max() < 1e-11:
            break
    return a, lb, cur


def _polish_rows(x, n, K, family, gamma, a, lb, a_bounds, lb_bounds,
                 force=None):
    """Hand rows whose Newton decrement says the likelihood can still improve
    (or that the caller flags) to the general optimizer. The decrement,
    projected onto directions not blocked by an active bound, estimates the
    attainable nll gain, so rows in likelihood-flat regions are accepted
    without a per-row scipy call."""
    a_lo, a_hi = a_bounds
    lb_lo, lb_hi = lb_bounds
    b = np.exp(lb)
    scale = 1.0 - gamma
    F = _base(family, x[None, :], a[:, None], b[:, None])
    psi = np.clip(gamma + scale * F, _PSI_CLIP, 1.0 - _PSI_CLIP)
    var = psi * (1.0 - psi)
    resid = (K - n[None, :] * psi) / var
    dfda, dfdb = _base_grad_ab(family, x[None, :], a[:, None], b[:, None])
    da_psi = scale * dfda
    dlb_psi = scale * dfdb * b[:, None]
    # nll gradient components (negative of the log-likelihood score)
    g1 = -(resid * da_psi).sum(axis=1)
    g2 = -(resid * dlb_psi).sum(axis=1)
    w = n[None, :] / var
    i11 = (w * da_psi * da_psi).sum(axis=1)
    i12 = (w * da_psi * dlb_psi).sum(axis=1)
    i22 = (w * dlb_psi * dlb_psi).sum(axis=1)
    # a component is inactive when its descent direction points out of bounds
    blocked1 = ((a <= a_lo) & (g1 > 0)) | ((a >= a_hi) & (g1 < 0))
    blocked2 = ((lb <= lb_lo) & (g2 > 0)) | ((lb >= lb_hi) & (g2 < 0))
    g1 = np.where(blocked1, 0.0, g1)
    g2 = np.where(blocked2, 0.0, g2)
    det = np.maximum(i11 * i22 - i12 * i12, 1e-300)
    dec_full = 0.5 * (i22 * g1 * g1 - 2 * i12 * g1 * g2 + i11 * g2 * g2) / det
    dec_1 = 0.5 * g1 * g1 / np.maximum(i11, 1e-300)
    dec_2 = 0.5 * g2 * g2 / np.maximum(i22, 1e-300)
    decrement = np.where(blocked1 & blocked2, 0.0,
                         np.where(blocked1, dec_2,
                                  np.where(blocked2, dec_1, dec_full)))
    needs = decrement > 1e-9
    if force is not None:
        needs |= force
    for i in np.nonzero(needs)[0]:
        refit = _fit_levels(x, n, K[i], family, LapsePolicy.FIXED_ZERO,
                            gamma, n_starts=4, warm_start=(a[i], b[i], 0.0))
        a[i], b[i] = refit.alpha, refit.beta
    return a, b


# --- parametric bootstrap and goodness of fit -------------------------------

@dataclass(frozen=True)
class BootstrapSE:
    sd_alpha: float
    sd_slope: float
    n_used: int
    n_failed: int

    def __iter__(self):
        return iter((self.sd_alpha, self.sd_slope))


def _simulate_counts(rng: np.random.Generator, n: np.ndarray,
                     p: np.ndarray) -> np.ndarray:
    return rng.binomial(n.astype(int), p).astype(float)


def _simulate_count_matrix(n_j: np.ndarray, p_j: np.ndarray, n_sim: int,
                           seed: int) -> tuple[np.ndarray, int]:
    """Simulated correct-count rows plus the number of degenerate rows dropped.

    Sub-seeds are derived from (seed, replicate index), so results do not
    depend on evaluation order.
    """
    rows = []
    n_degenerate = 0
    total_n = n_j.sum()
    for i in range(n_sim):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        k_sim = _simulate_counts(rng, n_j, p_j)
        total = k_sim.sum()
        if total == 0 or total == total_n:
            n_degenerate += 1
            rows.append(None)
        else:
            rows.append(k_sim)
    kept = np.array([r for r in rows if r is not None], dtype=float)
    return kept, n_degenerate


def _refit_rows(x: np.ndarray, n_j: np.ndarray, K: np.ndarray,
                fit: PsychometricFit) -> list[PsychometricFit]:
    """Refit every simulated dataset, warm-starting at the generating fit."""
    if fit.lapse_policy is LapsePolicy.FIXED_ZERO:
        a, b = _batch_refit(x, n_j, K, fit.family, fit.gamma,
                            (fit.alpha, fit.beta))
        nlls = _batch_nll(fit.family, x, n_j, K, fit.gamma, a, np.log(b))
        n_total = int(n_j.sum())
        return [PsychometricFit(fit.family, float(a[i]), float(b[i]),
                                fit.gamma, 0.0, -float(nlls[i]), n_total,
                                fit.lapse_policy)
                for i in range(K.shape[0])]
    warm = (fit.alpha, fit.beta, fit.lapse)
    return [_fit_levels(x, n_j, K[i], fit.family, fit.lapse_policy, fit.gamma,
                        n_starts=2, warm_start=warm)
            for i in range(K.shape[0])]


def bootstrap_se(fit: PsychometricFit, trials: Sequence[TrialRecord],
                 n: int = 1000, seed: int = 0,
                 max_failure_rate: float = 0.10) -> BootstrapSE:
    """SDs of alpha and slope over n parametric refits at the observed design.

    Degenerate simulations (all correct or all incorrect) are dropped and
    counted as failures; deterministic for a fixed seed.
    """
    if n < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    x, n_j, _ = _aggregate(trials)
    p_j = np.asarray(eval_pf(fit, x))
    K, n_failed = _simulate_count_matrix(n_j, p_j, n, seed)
    if n_failed > max_failure_rate * n:
        raise TooManyFailuresError(
            f"{n_failed}/{n} bootstrap refits were non-identifiable")
    refits = _refit_rows(x, n_j, K, fit)
    alphas = [r.alpha for r in refits]
    slopes = [slope_at_threshold(r) for r in refits]
    return BootstrapSE(
        sd_alpha=float(np.std(alphas, ddof=1)),
        sd_slope=float(np.std(slopes, ddof=1)),
        n_used=len(refits), n_failed=n_failed)


def _saturated_loglik(n: np.ndarray, k: np.ndarray) -> float:
    p_hat = k / n
    terms = np.zeros_like(p_hat)
    pos = k > 0
    terms[pos] += k[pos] * np.log(p_hat[pos])
    neg = k < n
    terms[neg] += (n[neg] - k[neg]) * np.log(1.0 - p_hat[neg])
    return float(terms.sum())


def _deviance(x: np.ndarray, n: np.ndarray, k: np.ndarray,
              fit: PsychometricFit) -> float:
    psi = np.clip(np.asarray(eval_pf(fit, x)), _PSI_CLIP, 1.0 - _PSI_CLIP)
    model = float(np.sum(k * np.log(psi) + (n - k) * np.log(1.0 - psi)))
    return max(2.0 * (_saturated_loglik(n, k) - model), 0.0)


def deviance_gof(fit: PsychometricFit, trials: Sequence[TrialRecord],
                 n_sim: int = 1000, seed: int = 0) -> GofResult:
    """Monte-Carlo deviance test: p-value is the rank of the observed deviance
    among deviances of datasets simulated from (and refit to) the model."""
    x, n_j, k_j = _aggregate(trials)
    d_obs = _deviance(x, n_j, k_j, fit)
    p_j = np.asarray(eval_pf(fit, x))
    K, n_degenerate = _simulate_count_matrix(n_j, p_j, n_sim, seed)
    # degenerate rows: the refit saturates, so their deviance limit is 0
    d_sims = [0.0] * n_degenerate
    for k_sim, refit in zip(K, _refit_rows(x, n_j, K, fit)):
        d_sims.append(_deviance(x, n_j, k_sim, refit))
    n_ge = sum(1 for d in d_sims if d >= d_obs - 1e-12)
    return GofResult(deviance=d_obs, p_value=n_ge / n_sim, n_sim=n_sim)


@dataclass(frozen=True)
class RankedFamily:
    family: PFFamily
    fit: PsychometricFit
    gof: GofResult


@dataclass(frozen=True)
class FamilyComparison:
    ranking: tuple[RankedFamily, ...]
    failures: tuple[tuple[PFFamily, str], ...]  # (family, reason) for skipped fits


def compare_families(trials: Sequence[TrialRecord],
                     families: Sequence[PFFamily],
                     n_sim: int = 400, seed: int = 0,
                     lapse_policy: LapsePolicy = LapsePolicy.FIXED_ZERO,
                     gamma: float = 0.5) -> FamilyComparison:
    """Fit every family, rank by GOF p-value (ties broken by log-likelihood)."""
    entries: list[RankedFamily] = []
    failures: list[tuple[PFFamily, str]] = []
    for fam in families:
        try:
            fit = fit_pf(trials, fam, lapse_policy=lapse_policy, gamma=gamma)
            gof = deviance_gof(fit, trials, n_sim=n_sim, seed=seed)
        except PsychometricError as exc:
            failures.append((fam, f"{type(exc).__name__}: {exc}"))
            continue
        entries.append(RankedFamily(fam, fit, gof))
    entries.sort(key=lambda e: (-e.gof.p_value, -e.fit.log_likelihood))
    return FamilyComparison(tuple(entries), tuple(failures))


# --- trial CSV and fit-report serialization --------------------------------

TRIALS_CSV_HEADER = ["stimulus_ppm", "pedestal_ppm", "correct", "order"]


def write_trials_csv(trials: Iterable[TrialRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIALS_CSV_HEADER)
        for t in trials:
            w.writerow([repr(t.stimulus), repr(t.pedestal),
                        int(t.correct), t.order.value])


def read_trials_csv(path_or_file) -> list[TrialRecord]:
    if hasattr(path_or_file, "read"):
        return _read_trials(path_or_file)
    with open(path_or_file, "r", encoding="utf-8", newline="") as fh:
        return _read_trials(fh)


def _read_trials(fh: io.TextIOBase) -> list[TrialRecord]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != TRIALS_CSV_HEADER:
        raise ValueError(f"expected header {','.join(TRIALS_CSV_HEADER)}")
    out = []
    for row in reader:
        if not row:
            continue
        stim, ped, corr, order = row
        out.append(TrialRecord(float(stim), float(ped),
                               bool(int(corr)), PresentationOrder(order)))
    return out


def fit_report(fit: PsychometricFit, se: Optional[BootstrapSE] = None,
               gof: Optional[GofResult] = None) -> dict:
    """Fit summary with stable field names for downstream tooling."""
    return {
        "family": fit.family.value,
        "alpha_ppm": fit.alpha,
        "beta": fit.beta,
        "gamma": fit.gamma,
        "lambda": fit.lapse,
        "threshold75_ppm": threshold_at(fit, 0.75),
        "slope_at_threshold": slope_at_threshold(fit),
        "sd_alpha": se.sd_alpha if se else None,
        "sd_slope": se.sd_slope if se else None,
        "deviance": gof.deviance if gof else None,
        "p_value": gof.p_value if gof else None,
    }


def render_fit_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False)
