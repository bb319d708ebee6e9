"""DFT-based RIS training and least-squares recovery of direct and cascaded channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelTrace, crandn


@dataclass(frozen=True)
class ReflectionSchedule:
    """Training reflection pattern. ``phi[:, 0]`` is the all-ones direct-path column."""

    phi: np.ndarray  # (T, M+1)

    @property
    def n_slots(self) -> int:
        return self.phi.shape[0]

    @property
    def n_groups(self) -> int:
        return self.phi.shape[1] - 1

    @property
    def thetas(self) -> np.ndarray:
        """RIS phase vector used in each slot, shape (T, M)."""
        return self.phi[:, 1:]

    def psi(self, n_antennas: int) -> np.ndarray:
        return np.kron(self.phi, np.eye(n_antennas))


def dft_reflection(M: int, T: int) -> ReflectionSchedule:
    if T < M + 1:
        raise ValueError(f"{T} pilot slots cannot identify {M} groups plus the direct path")
    t = np.arange(T)[:, None]
    m = np.arange(M + 1)[None, :]
    return ReflectionSchedule(np.exp(-2j * np.pi * t * m / T))


def pilot_sequences(n_users: int, T: int) -> np.ndarray:
    """Unit-modulus orthogonal pilots: user ``k`` gets row ``k`` of the T-point DFT."""
    if n_users > T:
        raise ValueError(f"only {T} orthogonal length-{T} pilots exist, {n_users} requested")
    k = np.arange(n_users)[:, None]
    t = np.arange(T)[None, :]
    return np.exp(-2j * np.pi * k * t / T)


def measurement_matrix(schedule: ReflectionSchedule, pilot: np.ndarray, n_antennas: int,
                       pilot_power: float) -> np.ndarray:
    """``Theta = sqrt(P_p) X Psi`` of shape (TN, N(M+1))."""
    pilot = np.asarray(pilot)
    if pilot.shape != (schedule.n_slots,):
        raise ValueError(f"pilot of length {pilot.shape} does not match {schedule.n_slots} slots")
    X = np.repeat(pilot, n_antennas)
    return np.sqrt(pilot_power) * X[:, None] * schedule.psi(n_antennas)


def simulate_uplink_pilots(trace: ChannelTrace, schedule: ReflectionSchedule, pilot: np.ndarray,
                           pilot_power: float, noise_variance: float, intervals, rng=None) -> np.ndarray:
    """Stacked received pilots of one user, shape (len(intervals), T*N).

    Slot ``t`` of interval ``l`` carries
    ``sqrt(P_p) * (G[l] theta_t + d[l]) * x[t] + v`` with ``v ~ CN(0, noise_variance I)``.
    """
    intervals = np.atleast_1d(np.asarray(intervals))
    if np.any(intervals < 0) or np.any(intervals >= trace.n_intervals):
        raise IndexError(f"interval outside trace of length {trace.n_intervals}")
    if schedule.n_groups != trace.g.shape[1]:
        raise ValueError(f"schedule has {schedule.n_groups} groups, trace has {trace.g.shape[1]}")
    pilot = np.asarray(pilot)
    if pilot.shape != (schedule.n_slots,):
        raise ValueError("pilot length must equal the number of slots")
    G = trace.G[intervals]                     # (L, N, M)
    d = trace.d[intervals]                     # (L, N)
    h = G @ schedule.thetas.T + d[:, :, None]  # (L, N, T)
    y = np.sqrt(pilot_power) * h * pilot[None, None, :]
    y = y.transpose(0, 2, 1).reshape(len(intervals), -1)
    if noise_variance > 0:
        if rng is None:
            raise ValueError("rng required for noisy reception")
        y = y + crandn(rng, y.shape, noise_variance)
    return y


def ls_estimate(y_bar: np.ndarray, theta: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """``(Theta^H Theta)^-1 Theta^H y``; ``y_bar`` may carry leading batch axes."""
    gram = theta.conj().T @ theta
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > cond_limit:
        raise np.linalg.LinAlgError(f"measurement matrix is rank deficient (cond ~ {cond:.3g})")
    rhs = np.asarray(y_bar) @ theta.conj()  # == (Theta^H y) along the last axis
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def split_estimate(f_hat: np.ndarray, n_antennas: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``[d; f_1; ...; f_M]`` into ``d`` (..., N) and ``G`` (..., N, M)."""
    f_hat = np.asarray(f_hat)
    total = f_hat.shape[-1]
    if total % n_antennas or total < 2 * n_antennas:
        raise ValueError(f"length {total} is not N(M+1) for N={n_antennas}")
    M = total // n_antennas - 1
    d = f_hat[..., :n_antennas]
    G = f_hat[..., n_antennas:].reshape(*f_hat.shape[:-1], M, n_antennas)
    return d, np.swapaxes(G, -1, -2)


def join_estimate(d: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Inverse of :func:`split_estimate`."""
    G = np.asarray(G)
    cols = np.swapaxes(G, -1, -2).reshape(*G.shape[:-2], -1)
    return np.concatenate([np.asarray(d), cols], axis=-1)


class PilotEstimator:
    """Per-user LS pipeline with the measurement pseudo-inverse cached.

    The schedule and pilots are the same in every training interval, so one
    inverse serves the whole training phase.
    """

    def __init__(self, n_antennas: int, n_groups: int, n_slots: int, n_users: int,
                 pilot_power: float, noise_variance: float):
        self.n_antennas = n_antennas
        self.pilot_power = pilot_power
        self.noise_variance = noise_variance
        self.schedule = dft_reflection(n_groups, n_slots)
        self.pilots = pilot_sequences(n_users, n_slots)
        self._pinv = []
        for pilot in self.pilots:
            theta = measurement_matrix(self.schedule, pilot, n_antennas, pilot_power)
            gram = theta.conj().T @ theta
            self._pinv.append(np.linalg.solve(gram, theta.conj().T))

    @classmethod
    def from_config(cls, cfg) -> "PilotEstimator":
        return cls(cfg.n_bs_antennas, cfg.ris_groups, cfg.pilot_slots, cfg.n_users,
                   cfg.pilot_power, cfg.noise_variance)

    def estimate(self, trace: ChannelTrace, k: int, intervals, rng) -> np.ndarray:
        """LS estimates ``f_hat`` of user ``k`` for each interval, shape (L, N(M+1))."""
        y = simulate_uplink_pilots(trace, self.schedule, self.pilots[k], self.pilot_power,
                                   self.noise_variance, intervals, rng)
        return y @ self._pinv[k].T
