"""Autoregressive channel prediction: loaded Jakes ACF, Levinson-Durbin, multi-step forecasts.

Sign convention follows the linear-prediction form used throughout the package::

    h[l] = -sum_{q=1}^{Q} a_q h[l-q] + w[l]

so the coefficients solve ``R a = -w`` with ``R`` the Toeplitz ACF matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channel import acf


class ArInstabilityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ArModel:
    order: int
    coeffs: np.ndarray
    innovation_variance: float
    f_n: float | None = None
    loading: float = 0.0

    def spectral_radius(self) -> float:
        """Largest root magnitude of ``1 + sum_q a_q z^-q``."""
        companion = np.zeros((self.order, self.order))
        companion[0, :] = -np.asarray(self.coeffs)
        companion[1:, :-1] = np.eye(self.order - 1)
        return float(np.max(np.abs(np.linalg.eigvals(companion))))

    def is_stable(self) -> bool:
        return self.spectral_radius() < 1.0

    def to_dict(self) -> dict:
        return {"order": self.order, "coeffs": [float(a) for a in self.coeffs],
                "innovation_variance": float(self.innovation_variance),
                "f_n": None if self.f_n is None else float(self.f_n),
                "loading": float(self.loading)}

    @classmethod
    def from_dict(cls, data: dict) -> "ArModel":
        coeffs = np.asarray(data["coeffs"], dtype=float)
        if len(coeffs) != data["order"]:
            raise ValueError("coefficient count does not match order")
        return cls(int(data["order"]), coeffs, float(data["innovation_variance"]),
                   data.get("f_n"), float(data.get("loading", 0.0)))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ArModel":
        return cls.from_dict(json.loads(text))


def loaded_acf(f_n: float, epsilon: float, Q: int) -> np.ndarray:
    """``Rhat[0..Q]`` with ``epsilon`` added at lag zero."""
    if Q < 1:
        raise ValueError("AR order must be >= 1")
    r = np.asarray(acf(f_n, np.arange(Q + 1)), dtype=float)
    r[0] += epsilon
    return r


def levinson_durbin(r, f_n: float | None = None, loading: float = 0.0) -> ArModel:
    """Solve the order-``len(r)-1`` Yule-Walker system by Levinson-Durbin recursion."""
    r = np.asarray(r, dtype=float)
    Q = len(r) - 1
    if Q < 1:
        raise ValueError("need at least two autocorrelation lags")
    if r[0] <= 0:
        raise ArInstabilityError("lag-0 autocorrelation must be positive")
    a = np.zeros(Q)
    err = r[0]
    for m in range(1, Q + 1):
        acc = r[m] + np.dot(a[:m - 1], r[m - 1:0:-1])
        k = -acc / err
        if abs(k) >= 1.0:
            raise ArInstabilityError(f"reflection coefficient |k|={abs(k):.6f} >= 1 at order {m}")
        if m > 1:
            a[:m - 1] = a[:m - 1] + k * a[m - 2::-1]
        a[m - 1] = k
        err *= 1.0 - k * k
    sigma2 = float(r[0] + np.dot(a, r[1:]))
    return ArModel(Q, a, sigma2, f_n, loading)


def model_for_doppler(f_n: float, epsilon: float, Q: int) -> ArModel:
    return levinson_durbin(loaded_acf(f_n, epsilon, Q), f_n=f_n, loading=epsilon)


def sample_acf(history, max_lag: int) -> np.ndarray:
    """Biased sample ACF, normalized per coefficient and averaged over coefficients.

    ``history`` has time on axis 0; all trailing axes are coefficients.
    """
    x = np.asarray(history)
    V = x.shape[0]
    x = x.reshape(V, -1)
    power = np.sum(np.abs(x) ** 2, axis=0) / V
    live = power > 0
    if not np.any(live):
        raise ValueError("history is identically zero")
    x = x[:, live]
    r = np.empty(max_lag + 1)
    for q in range(max_lag + 1):
        r[q] = np.mean(np.real(np.sum(x[q:] * np.conj(x[:V - q]), axis=0)) / V / power[live])
    return r


def fit_ar_from_csi(history, Q: int, epsilon: float) -> ArModel:
    """AR(Q) fitted to a short window of estimated CSI (the online baseline)."""
    V = np.shape(history)[0]
    if V < Q + 1:
        raise ValueError(f"{V} snapshots cannot fit an order-{Q} model (need {Q + 1})")
    r = sample_acf(history, Q)
    r[0] += epsilon
    return levinson_durbin(r, loading=epsilon)


def predict_one(history, model: ArModel) -> np.ndarray:
    """One-step forecast ``-sum_q a_q h[l-q]`` applied to every coefficient."""
    return predict_multi(history, model, 1)[0]


def predict_multi(history, model: ArModel, P: int) -> np.ndarray:
    """Forecast ``P`` steps, feeding earlier forecasts back in place of measurements.

    ``history`` has time on axis 0 (oldest first); returns shape ``(P, *history.shape[1:])``.
    """
    history = np.asarray(history)
    Q = model.order
    if history.shape[0] < Q:
        raise ValueError(f"need {Q} past snapshots, got {history.shape[0]}")
    if P < 1:
        raise ValueError("horizon must be >= 1")
    a = np.asarray(model.coeffs)
    buf = list(history[history.shape[0] - Q:])
    out = []
    for _ in range(P):
        recent = np.stack(buf[::-1][:Q])  # recent[q-1] = h[l-q]
        nxt = -np.tensordot(a, recent, axes=1)
        out.append(nxt)
        buf.append(nxt)
    return np.stack(out)
