"""Time-varying Rayleigh channels with Jakes autocorrelation for the RIS-assisted link."""

from __future__ import annotations

import struct
from functools import lru_cache
from dataclasses import dataclass

import numpy as np
from scipy import special

from .scenario import Geometry, SystemConfig, link_variances, path_loss


def bessel_j0(x):
    """Zeroth-order Bessel function of the first kind."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("bessel_j0 needs finite input")
    out = special.j0(x)
    return float(out) if out.ndim == 0 else out


def acf(f_n, lag):
    """Jakes autocorrelation ``J0(2*pi*f_n*|lag|)``."""
    if np.any(np.asarray(f_n) < 0):
        raise ValueError("normalized Doppler must be non-negative")
    return bessel_j0(2.0 * np.pi * np.asarray(f_n, dtype=float) * np.abs(lag))


def crandn(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def loaded_covariance(f_n: float, n_intervals: int, epsilon: float) -> np.ndarray:
    lags = np.arange(n_intervals)
    r = acf(f_n, lags)
    r[0] += epsilon
    return r[np.abs(lags[:, None] - lags[None, :])]


@lru_cache(maxsize=256)
def aging_factor(f_n: float, n_intervals: int, epsilon: float) -> np.ndarray:
    """Lower Cholesky factor of the loaded Toeplitz covariance (cached, read-only)."""
    cov = loaded_covariance(f_n, n_intervals, epsilon)
    try:
        chol = np.linalg.cholesky(cov)
        chol.flags.writeable = False
        return chol
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"aging covariance not positive definite (f_n={f_n}, length={n_intervals}, "
            f"loading={epsilon}); increase the loading") from exc


def generate_aged_trace(f_n, n_intervals, variance, epsilon, rng, size=()):
    """Draw correlated complex trajectories along axis 0.

    Returns an array of shape ``(n_intervals, *size)`` whose columns are
    independent zero-mean Gaussian processes with covariance
    ``variance * Rhat[i - j]`` (``Rhat[0] = 1 + epsilon``).
    """
    if n_intervals < 1:
        raise ValueError("n_intervals must be >= 1")
    size = (int(size),) if np.isscalar(size) else tuple(size)
    chol = aging_factor(float(f_n), int(n_intervals), float(epsilon))
    white = crandn(rng, (n_intervals, int(np.prod(size, dtype=int))), variance)
    return (chol @ white).reshape((n_intervals, *size))


def generate_static_channel(cfg: SystemConfig, geom: Geometry, rng) -> np.ndarray:
    """Quasi-static BS-RIS channel ``H`` of shape (M, N)."""
    var_h = path_loss(geom.d_bs_ris, cfg.pathloss_exponents[2], cfg.pathloss_ref)
    return crandn(rng, (cfg.ris_groups, cfg.n_bs_antennas), var_h)


def cascade(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``G = H^H diag(g)``; works on a trailing-axis stack of ``g`` vectors too."""
    H = np.asarray(H)
    g = np.asarray(g)
    if g.shape[-1] != H.shape[0]:
        raise ValueError(f"g has {g.shape[-1]} entries, H has {H.shape[0]} rows")
    return H.conj().T * g[..., None, :]


def effective_channel(G: np.ndarray, theta: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``h = G theta + d`` (batched over leading axes)."""
    G = np.asarray(G)
    theta = np.asarray(theta)
    d = np.asarray(d)
    if G.shape[-1] != theta.shape[-1] or G.shape[-2] != d.shape[-1]:
        raise ValueError(f"shape mismatch: G {G.shape}, theta {theta.shape}, d {d.shape}")
    return np.einsum("...nm,...m->...n", G, theta) + d


@dataclass
class ChannelTrace:
    """Ground-truth channels of one user over ``n_intervals`` coherence intervals."""

    H: np.ndarray   # (M, N), quasi-static
    d: np.ndarray   # (L, N)
    g: np.ndarray   # (L, M)
    f_n: float
    variances: tuple[float, float, float]  # (direct, RIS-user, BS-RIS)

    @property
    def n_intervals(self) -> int:
        return self.d.shape[0]

    @property
    def G(self) -> np.ndarray:
        """Cascaded channels, shape (L, N, M)."""
        return cascade(self.H, self.g)

    def stacked(self) -> np.ndarray:
        """Per-interval ``[d; f_1; ...; f_M]`` vectors, shape (L, N(M+1))."""
        G = self.G
        L, N, M = G.shape
        return np.concatenate([self.d, G.transpose(0, 2, 1).reshape(L, N * M)], axis=1)

    def effective(self, theta=None) -> np.ndarray:
        """Effective channels, shape (L, N). ``theta=None`` means all-ones."""
        if theta is None:
            theta = np.ones(self.g.shape[1], dtype=complex)
        return effective_channel(self.G, theta, self.d)


def generate_user_trace(cfg: SystemConfig, geom: Geometry, k: int, H: np.ndarray,
                        f_n: float, n_intervals: int, rng) -> ChannelTrace:
    var_d, var_g, var_h = link_variances(cfg, geom, k)
    d = generate_aged_trace(f_n, n_intervals, var_d, cfg.loading, rng, size=cfg.n_bs_antennas)
    g = generate_aged_trace(f_n, n_intervals, var_g, cfg.loading, rng, size=cfg.ris_groups)
    return ChannelTrace(H=H, d=d, g=g, f_n=float(f_n), variances=(var_d, var_g, var_h))


def generate_traces(cfg: SystemConfig, geom: Geometry, f_n, n_intervals: int, rng) -> list[ChannelTrace]:
    """One shared ``H`` and an independent aged trace per user.

    ``f_n`` may be a scalar or one value per user.
    """
    H = generate_static_channel(cfg, geom, rng)
    f_ns = np.broadcast_to(np.asarray(f_n, dtype=float), (geom.n_users,))
    return [generate_user_trace(cfg, geom, k, H, f_ns[k], n_intervals, rng)
            for k in range(geom.n_users)]


# -- replay dump --------------------------------------------------------------
# Header: magic b"RTRC", uint32 version, uint32 N, uint32 M, uint32 L, float64 f_n,
# float64 x3 variances; then complex128 little-endian arrays H (M*N), d (L*N), g (L*M),
# each row-major.

_TRACE_MAGIC = b"RTRC"
_TRACE_HEADER = struct.Struct("<4sIIIId3d")


def dump_trace(trace: ChannelTrace, path) -> None:
    M, N = trace.H.shape
    header = _TRACE_HEADER.pack(_TRACE_MAGIC, 1, N, M, trace.n_intervals, trace.f_n,
                                *trace.variances)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (trace.H, trace.d, trace.g):
            fh.write(np.ascontiguousarray(arr, dtype="<c16").tobytes())


def load_trace(path) -> ChannelTrace:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, N, M, L, f_n, *variances = _TRACE_HEADER.unpack_from(raw)
    if magic != _TRACE_MAGIC or version != 1:
        raise ValueError(f"{path}: not a channel trace dump")
    body = np.frombuffer(raw, dtype="<c16", offset=_TRACE_HEADER.size)
    sizes = [M * N, L * N, L * M]
    if body.size != sum(sizes):
        raise ValueError(f"{path}: truncated trace dump")
    H, d, g = np.split(body, np.cumsum(sizes)[:-1])
    return ChannelTrace(H=H.reshape(M, N).astype(complex), d=d.reshape(L, N).astype(complex),
                        g=g.reshape(L, M).astype(complex), f_n=f_n, variances=tuple(variances))
