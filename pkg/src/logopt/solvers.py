"""Concave maximization over the probability simplex.

Two-phase solver used by both the allocation-utility optimizer and the
discrete log-optimal computation: a batch of exponentiated-gradient
(multiplicative-update) ascents from random starting points locates the
optimal face, then an active-set Newton polish on that face drives the
stationarity residual to machine precision. A minimum-return halfspace
``b @ mu >= c`` can be enforced; iterates stay feasible via an exponential
tilting projection (the KL projection onto the halfspace).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

_EXP_CLIP = 50.0
_FACE_TOL = 1e-8
_DROP_TOL = 1e-13


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the simplex maximizer."""

    restarts: int = 16
    max_iter: int = 400
    tolerance: float = 1e-10
    seed: int = 0
    polish: bool = True


def tilt_to_min_return(b: np.ndarray, mu: np.ndarray, c: float) -> np.ndarray:
    """KL-project ``b`` onto the simplex slice with ``b @ mu >= c``.

    Reweights ``b_i -> b_i * exp(tau * mu_i)`` with the smallest tau >= 0
    achieving the target mean return. Requires ``max(mu) >= c``.
    """
    if b @ mu >= c:
        return b
    top = float(np.max(mu))
    if top < c:
        raise ValueError(f"min return {c} infeasible: max mu = {top}")

    def tilted_mean(tau: float) -> float:
        z = b * np.exp(np.clip(tau * (mu - top), -700, 0))
        return float(z @ mu / z.sum())

    hi = 1.0
    while tilted_mean(hi) < c:
        hi *= 2.0
        if hi > 1e8:
            # numerically at the one-hot limit
            return _one_hot_like(b, int(np.argmax(mu)))
    tau = brentq(lambda t: tilted_mean(t) - c, 0.0, hi, xtol=1e-15)
    z = b * np.exp(np.clip(tau * (mu - top), -700, 0))
    return z / z.sum()


def _one_hot_like(b: np.ndarray, i: int) -> np.ndarray:
    out = np.zeros_like(b)
    out[i] = 1.0
    return out


def _eg_phase(
    value_grad: Callable,
    starts: np.ndarray,
    opts: SolverOptions,
    mu: np.ndarray | None,
    min_return: float,
) -> np.ndarray:
    """Monotone multiplicative-update ascent, batched over starting points."""
    B = starts.copy()
    vals, _ = value_grad(B)
    eta = np.full(B.shape[0], 1.0)
    stall = np.zeros(B.shape[0], dtype=int)
    for _ in range(opts.max_iter):
        _, G = value_grad(B)
        Gc = G - (B * G).sum(axis=1, keepdims=True)
        cand = B * np.exp(np.clip(eta[:, None] * Gc, -_EXP_CLIP, _EXP_CLIP))
        cand /= cand.sum(axis=1, keepdims=True)
        if mu is not None and min_return > 0:
            low = cand @ mu < min_return
            for r in np.nonzero(low)[0]:
                cand[r] = tilt_to_min_return(cand[r], mu, min_return)
        cand_vals, _ = value_grad(cand)
        better = cand_vals >= vals
        B[better] = cand[better]
        eta = np.where(better, np.minimum(eta * 1.25, 1e3), np.maximum(eta * 0.5, 1e-7))
        gain = np.where(better, cand_vals - vals, 0.0)
        vals = np.where(better, cand_vals, vals)
        stall = np.where(gain < opts.tolerance, stall + 1, 0)
        if np.all(stall >= 5):
            break
    return B[int(np.argmax(vals))]


def _newton_on_face(value_grad_hess, b, face, rows_mu, mu, min_return):
    """Equality-constrained Newton steps on a fixed face; returns (b, hit)."""
    d = b.size
    idx = np.nonzero(face)[0]
    for _ in range(60):
        val, g, H = value_grad_hess(b)
        C = [np.ones(idx.size)]
        if rows_mu:
            C.append(mu[idx])
        C = np.asarray(C)
        k = C.shape[0]
        kkt = np.zeros((idx.size + k, idx.size + k))
        kkt[: idx.size, : idx.size] = H[np.ix_(idx, idx)]
        kkt[: idx.size, idx.size:] = C.T
        kkt[idx.size:, : idx.size] = C
        rhs = np.concatenate([-g[idx], np.zeros(k)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        step = sol[: idx.size]
        if not np.all(np.isfinite(step)):
            return b, None
        if np.max(np.abs(step)) < 1e-15:
            return b, None
        # longest feasible move before a coordinate (or the return floor) hits
        alpha = 1.0
        hit = None
        for j, i in enumerate(idx):
            if step[j] < 0 and b[i] + step[j] < 0:
                a = b[i] / -step[j]
                if a < alpha:
                    alpha, hit = a, ("coord", i)
        if mu is not None and min_return > 0 and not rows_mu:
            drift = step @ mu[idx]
            if drift < 0:
                a = (b @ mu - min_return) / -drift
                if 0 <= a < alpha:
                    alpha, hit = a, ("return", None)
        nb = b.copy()
        nb[idx] = b[idx] + alpha * step
        nb[idx] = np.maximum(nb[idx], 0.0)
        nb /= nb.sum()
        nval, _, _ = value_grad_hess(nb)
        shrink = 0
        while nval < val - 1e-13 and shrink < 30:
            alpha *= 0.5
            hit = None
            nb = b.copy()
            nb[idx] = b[idx] + alpha * step
            nb[idx] = np.maximum(nb[idx], 0.0)
            nb /= nb.sum()
            nval, _, _ = value_grad_hess(nb)
            shrink += 1
        if nval < val - 1e-13:
            return b, None
        b = nb
        if hit is not None:
            return b, hit
    return b, None


def _polish(value_grad_hess, b, mu, min_return):
    """Active-set Newton refinement; faces are dropped/re-added until KKT holds."""
    d = b.size
    face = b > _FACE_TOL
    if not np.any(face):
        face = b == b.max()
    b = np.where(face, b, 0.0)
    b = b / b.sum()
    rows_mu = mu is not None and min_return > 0 and b @ mu <= min_return + 1e-12
    for _ in range(3 * d + 8):
        b, hit = _newton_on_face(value_grad_hess, b, face, rows_mu, mu, min_return)
        if hit is not None:
            kind, i = hit
            if kind == "coord":
                face[i] = False
                b[i] = 0.0
                if b.sum() <= 0:
                    return b
                b = b / b.sum()
            else:
                rows_mu = True
            continue
        # face-stationary: check multiplier signs / dropped coordinates
        _, g, _ = value_grad_hess(b)
        idx = np.nonzero(face)[0]
        C = [np.ones(d)]
        if rows_mu:
            C.append(mu)
        A = np.asarray(C)[:, idx]
        m, *_ = np.linalg.lstsq(A.T, g[idx], rcond=None)
        lam = m[0]
        beta = -m[1] if rows_mu else 0.0
        if rows_mu and beta < -1e-11:
            rows_mu = False
            continue
        # price of each zeroed coordinate under (lam, beta)
        reentry = None
        for i in np.nonzero(~face)[0]:
            slack = g[i] - lam + beta * mu[i] if rows_mu else g[i] - lam
            if slack > 1e-11 and (reentry is None or slack > reentry[1]):
                reentry = (i, slack)
        if reentry is None:
            return b
        face[reentry[0]] = True
        b = np.where(face & (b <= 0), 1e-12, b)
        b = b / b.sum()
    return b


def maximize_on_simplex(
    value_grad: Callable,
    value_grad_hess: Callable,
    d: int,
    opts: SolverOptions,
    mu: np.ndarray | None = None,
    min_return: float = 0.0,
    extra_starts: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Maximize a concave objective over the simplex (optionally with
    ``b @ mu >= min_return``).

    ``value_grad(B)`` maps a batch of rows to (values, gradients);
    ``value_grad_hess(b)`` maps one point to (value, gradient, hessian).
    """
    rng = np.random.default_rng(opts.seed)
    starts = [np.full(d, 1.0 / d)]
    if extra_starts:
        starts.extend(np.asarray(s, dtype=float) for s in extra_starts)
    if opts.restarts > 0 and d > 1:
        starts.append(rng.dirichlet(np.ones(d), size=opts.restarts))
    B = np.vstack([np.atleast_2d(s) for s in starts])
    B = np.maximum(B, 1e-12)
    B /= B.sum(axis=1, keepdims=True)
    if mu is not None and min_return > 0:
        for r in range(B.shape[0]):
            if B[r] @ mu < min_return:
                B[r] = tilt_to_min_return(B[r], mu, min_return)
    best = _eg_phase(value_grad, B, opts, mu, min_return)
    if opts.polish:
        polished = _polish(value_grad_hess, best.copy(), mu, min_return)
        pv, _, _ = value_grad_hess(polished)
        bv, _, _ = value_grad_hess(best)
        # the polish is monotone up to float noise; don't reject over rounding
        if np.isfinite(pv) and pv >= bv - 1e-11 * max(1.0, abs(bv)):
            best = polished
    best = np.maximum(best, 0.0)
    return best / best.sum()
