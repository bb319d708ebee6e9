"""Downlink beamforming, RIS phase optimization and evaluation metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass
class BeamformingSolution:
    theta: np.ndarray
    u: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class OverheadReport:
    conventional: int
    proposed: int

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.conventional, self.proposed)


def mrt_beamformer(h: np.ndarray) -> np.ndarray:
    """Unit-norm beamformer maximizing ``|h^H u|``, i.e. ``h / ||h||``."""
    h = np.asarray(h)
    norm = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("degenerate (all-zero) channel")
    return h / norm


def _optimize_batch(G: np.ndarray, d: np.ndarray, tol: float, max_iters: int):
    """Cyclic coordinate ascent on ``||G theta + d||^2`` over a batch of instances."""
    B, N, M = G.shape
    theta = np.zeros((B, M), dtype=complex)
    c = d.copy()
    # Greedy initial pass: coordinate ascent started from the reflection-free point.
    for m in range(M):
        inner = np.einsum("bn,bn->b", c.conj(), G[:, :, m])
        theta[:, m] = np.exp(-1j * np.angle(inner))
        c += theta[:, m, None] * G[:, :, m]
    obj = np.sum(np.abs(c) ** 2, axis=1)
    history = [obj.copy()]
    iters = np.zeros(B, dtype=int)
    active = np.ones(B, dtype=bool)
    for _ in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Gi, th, ci = G[idx], theta[idx], c[idx]
        for m in range(M):
            f = Gi[:, :, m]
            rest = ci - th[:, m, None] * f
            inner = np.einsum("bn,bn->b", rest.conj(), f)
            th[:, m] = np.exp(-1j * np.angle(inner))
            ci = rest + th[:, m, None] * f
        new_obj = np.sum(np.abs(ci) ** 2, axis=1)
        theta[idx], c[idx] = th, ci
        gain = new_obj - obj[idx]
        obj[idx] = new_obj
        iters[idx] += 1
        history.append(obj.copy())
        done = gain <= tol * np.maximum(new_obj, np.finfo(float).tiny)
        active[idx[done]] = False
    return theta, obj, iters, ~active, history


def optimize_phases(G, d, tol: float = 1e-8, max_iters: int = 100) -> BeamformingSolution:
    """Unit-modulus RIS phases maximizing ``||G theta + d||^2`` plus the matching MRT beam."""
    G = np.asarray(G, dtype=complex)
    d = np.asarray(d, dtype=complex)
    if G.ndim != 2 or d.shape != (G.shape[0],):
        raise ValueError(f"shape mismatch: G {G.shape}, d {d.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(d))):
        raise ValueError("non-finite channel")
    theta, obj, iters, conv, history = _optimize_batch(G[None], d[None], tol, max_iters)
    h = G @ theta[0] + d
    u = mrt_beamformer(h) if np.any(h) else np.zeros_like(h)
    return BeamformingSolution(theta[0], u, float(obj[0]), int(iters[0]), bool(conv[0]),
                               [float(o[0]) for o in history])


def optimize_phases_batch(G, d, tol: float = 1e-8, max_iters: int = 100):
    """Vectorized :func:`optimize_phases`; returns ``(theta, u)`` of shapes (B, M), (B, N)."""
    G = np.asarray(G, dtype=complex)
    d = np.asarray(d, dtype=complex)
    theta = _optimize_batch(G, d.copy(), tol, max_iters)[0]
    h = np.einsum("bnm,bm->bn", G, theta) + d
    return theta, mrt_beamformer(h)


def spectral_efficiency(G, theta, d, u, data_power: float, noise_variance: float):
    """``log2(1 + P_d/sigma^2 |(G theta + d)^H u|^2)``, batched over leading axes."""
    h = np.einsum("...nm,...m->...n", np.asarray(G), np.asarray(theta)) + np.asarray(d)
    gain = np.abs(np.sum(h.conj() * np.asarray(u), axis=-1)) ** 2
    return np.log2(1.0 + data_power / noise_variance * gain)


def nmse_per_trial(predicted, truth) -> np.ndarray:
    """User-averaged ``||h_hat - h||^2 / ||h||^2``; users on axis -2, antennas on axis -1.

    Users whose true channel is zero are excluded (``nan`` if all are).
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch {predicted.shape} vs {truth.shape}")
    den = np.sum(np.abs(truth) ** 2, axis=-1)
    num = np.sum(np.abs(predicted - truth) ** 2, axis=-1)
    zero = den == 0
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} zero-norm channels excluded from NMSE", RuntimeWarning)
    ratio = np.where(zero, np.nan, num / np.where(zero, 1.0, den))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(ratio, axis=-1)


def nmse(predicted, truth) -> float:
    """Mean over trials of the user-averaged normalized squared error."""
    return float(np.nanmean(nmse_per_trial(predicted, truth)))


def pilot_overhead(cfg) -> OverheadReport:
    N, K, V, P = cfg.n_bs_antennas, cfg.n_users, cfg.train_intervals, cfg.predict_intervals
    conventional = (cfg.ris_elements_total * N * K + N * K) * (V + P)
    proposed = (cfg.ris_groups * N * K + N * K) * V
    return OverheadReport(conventional, proposed)


def average_se(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no spectral-efficiency samples")
    return float(np.mean(values))
