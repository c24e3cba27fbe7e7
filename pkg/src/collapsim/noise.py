"""Multivariate Gaussian noise processes on a time grid.

Defines the stationary correlation kernels (white, exponential, tabulated
spectral density with frequency cutoff), grid covariance assembly, Cholesky
sampling with counter-based per-(seed, index) streams, the running kernel
integral F_ij(t) = int_0^t D_ij(t,s) ds that controls both state reduction
and energy gain, its long-time spectral limit, and Monte Carlo checks of the
Gaussian functional-derivative identity
E[F.w_i(t)] = sum_j int_0^t D_ij(t,s) E[dF/dw_j(s)] ds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

CHOLESKY_JITTERS = (1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with M steps on [0, t_end]; knots t_k = k*dt."""

    t_end: float
    steps: int

    def __post_init__(self):
        if self.t_end <= 0 or self.steps < 1:
            raise ValueError("grid needs t_end > 0 and steps >= 1")

    @property
    def dt(self) -> float:
        return self.t_end / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.steps + 1)

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not (0 <= k <= self.steps) or abs(k * self.dt - t) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"time {t} is not a grid knot (dt={self.dt})")
        return k


def _psd_coupling(c) -> np.ndarray:
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c.shape[0] != c.shape[1]:
        raise ValueError("coupling matrix must be square")
    if np.max(np.abs(c - c.T)) > 1e-12 * max(1.0, np.max(np.abs(c))):
        raise ValueError("coupling matrix must be symmetric")
    if np.linalg.eigvalsh(c)[0] < -1e-10 * max(1.0, np.max(np.abs(c))):
        raise ValueError("coupling matrix must be positive semidefinite")
    return c


@dataclass(frozen=True)
class WhiteKernel:
    """Delta-correlated noise, D_ij(t,s) = c_ij * delta(t-s)."""

    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _psd_coupling(self.c))
        self.c.setflags(write=False)

    @property
    def n_ops(self) -> int:
        return self.c.shape[0]

    is_white = True


@dataclass(frozen=True)
class ExponentialKernel:
    """Ornstein-Uhlenbeck-type kernel, D_ij(tau) = c_ij * (lam/2) exp(-lam|tau|).

    Normalized so the integral over all tau equals c_ij; lam -> infinity
    recovers the white kernel.
    """

    c: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "c", _psd_coupling(self.c))
        self.c.setflags(write=False)
        if self.lam <= 0:
            raise ValueError("decay rate lam must be positive")

    @property
    def n_ops(self) -> int:
        return self.c.shape[0]

    is_white = False

    def d_tau(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        env = 0.5 * self.lam * np.exp(-self.lam * np.abs(tau))
        return env[..., None, None] * self.c


@dataclass(frozen=True)
class SpectralCutoffKernel:
    """Kernel given by a tabulated cosine spectral density on [0, omega_max].

    D_ij(tau) = int_0^omega_max dw gamma_ij(w) cos(w tau), evaluated by
    trapezoidal quadrature on the tabulation.  gamma must be symmetric PSD
    at every tabulated frequency and the table must start at w = 0.
    """

    omega: np.ndarray
    gamma_table: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        g = np.asarray(self.gamma_table, dtype=float)
        if g.ndim == 1:
            g = g[:, None, None]
        if om.ndim != 1 or om.size < 2 or np.any(np.diff(om) <= 0):
            raise ValueError("omega must be a strictly increasing 1-d table")
        if om[0] != 0.0:
            raise ValueError("spectral tabulation must include omega = 0")
        if g.shape[0] != om.size or g.shape[1] != g.shape[2]:
            raise ValueError("gamma_table must have shape (n_omega, N, N)")
        if np.max(np.abs(g - np.transpose(g, (0, 2, 1)))) > 1e-12 * max(1.0, np.max(np.abs(g))):
            raise ValueError("gamma_table must be symmetric in the operator indices")
        w_min = min(np.linalg.eigvalsh(g[k])[0] for k in range(g.shape[0]))
        if w_min < -1e-10 * max(1.0, np.max(np.abs(g))):
            raise ValueError("gamma_table must be positive semidefinite at each omega")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "gamma_table", g)
        self.omega.setflags(write=False)
        self.gamma_table.setflags(write=False)

    @property
    def n_ops(self) -> int:
        return self.gamma_table.shape[1]

    @property
    def omega_max(self) -> float:
        return float(self.omega[-1])

    is_white = False

    def d_tau(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.empty(tau.shape + self.gamma_table.shape[1:])
        # chunk the cos(omega x tau) outer product to bound memory
        block = max(1, int(4e6) // max(1, self.omega.size))
        for s in range(0, tau.size, block):
            cos = np.cos(np.outer(tau[s:s + block], self.omega))
            out[s:s + block] = np.trapezoid(
                cos[:, :, None, None] * self.gamma_table, self.omega, axis=1)
        return out


CorrelationKernel = Union[WhiteKernel, ExponentialKernel, SpectralCutoffKernel]


@dataclass(frozen=True)
class NoiseRealization:
    """One sampled path per noise channel, shape (N, M+1).

    For white kernels the entries are scaled increments dW_k/dt attached to
    knots 0..M-1 (grid-averaged white noise, variance c/dt); the final column
    is a zero sentinel.
    """

    samples: np.ndarray
    seed: int
    index: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ValueError("samples must have shape (N, M+1)")
        if not np.all(np.isfinite(s)):
            raise ValueError("noise samples must be finite")
        object.__setattr__(self, "samples", s)
        self.samples.setflags(write=False)


def covariance_matrix(kernel: CorrelationKernel, grid: TimeGrid) -> np.ndarray:
    """Dense grid covariance, entry ((i,k),(j,l)) = D_ij(t_k, t_l).

    Not defined for white kernels (delta correlation has no finite grid
    covariance; white noise is sampled from independent increments).
    """
    if kernel.is_white:
        raise ValueError("white kernels are sampled as increments, "
                         "not through a grid covariance")
    n = kernel.n_ops
    m1 = grid.steps + 1
    d_lattice = kernel.d_tau(grid.times)      # (M+1, N, N), stationary
    if not np.all(np.isfinite(d_lattice)):
        raise ValueError("kernel evaluation produced non-finite values")
    k_idx = np.abs(np.arange(m1)[:, None] - np.arange(m1)[None, :])
    cov = d_lattice[k_idx]                    # (M+1, M+1, N, N)
    cov = np.transpose(cov, (2, 0, 3, 1)).reshape(n * m1, n * m1)
    return np.ascontiguousarray(cov)


_chol_cache: dict = {}


def _kernel_key(kernel: CorrelationKernel, grid: TimeGrid):
    if isinstance(kernel, ExponentialKernel):
        body = ("exp", kernel.c.tobytes(), kernel.lam)
    elif isinstance(kernel, SpectralCutoffKernel):
        body = ("spec", kernel.omega.tobytes(), kernel.gamma_table.tobytes())
    else:
        body = ("white", kernel.c.tobytes())
    return body + (grid.t_end, grid.steps)


def _cholesky_factor(kernel: CorrelationKernel, grid: TimeGrid) -> np.ndarray:
    """Lower Cholesky factor of the grid covariance, with jitter escalation."""
    key = _kernel_key(kernel, grid)
    hit = _chol_cache.get(key)
    if hit is not None:
        return hit
    cov = covariance_matrix(kernel, grid)
    scale = max(float(np.max(np.diag(cov))), 1.0)
    last = None
    for jit in CHOLESKY_JITTERS:
        try:
            factor = np.linalg.cholesky(cov + jit * scale * np.eye(cov.shape[0]))
            if len(_chol_cache) > 6:
                _chol_cache.clear()
            _chol_cache[key] = factor
            return factor
        except np.linalg.LinAlgError as exc:
            last = exc
    raise np.linalg.LinAlgError(
        f"covariance is not positive semidefinite even with jitter "
        f"{CHOLESKY_JITTERS[-1]:g} (indefinite kernel?): {last}")


def _path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream, reproducible per (seed, trajectory index)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _standard_normal_block(seed: int, indices, size: int) -> np.ndarray:
    """(size, len(indices)) standard normals, column i from stream indices[i]."""
    z = np.empty((size, len(indices)))
    for col, idx in enumerate(indices):
        z[:, col] = _path_rng(seed, idx).standard_normal(size)
    return z


def sample_noise_block(kernel: CorrelationKernel, grid: TimeGrid, seed: int,
                       indices) -> np.ndarray:
    """Sample many realizations at once; returns (P, N, M+1).

    Column p reproduces sample_noise(kernel, grid, seed, indices[p]) exactly.
    """
    indices = list(indices)
    n, m1 = kernel.n_ops, grid.steps + 1
    if kernel.is_white:
        c_factor = np.linalg.cholesky(
            kernel.c + 1e-14 * max(1.0, np.max(np.abs(kernel.c))) * np.eye(n))
        z = _standard_normal_block(seed, indices, n * grid.steps)
        z = z.reshape(n, grid.steps, len(indices))
        w = np.einsum("ij,jkp->pik", c_factor, z) / np.sqrt(grid.dt)
        out = np.zeros((len(indices), n, m1))
        out[:, :, :grid.steps] = w
        return out
    factor = _cholesky_factor(kernel, grid)
    z = _standard_normal_block(seed, indices, n * m1)
    w = factor @ z                                   # (N*(M+1), P)
    return np.ascontiguousarray(w.T.reshape(len(indices), n, m1))


def sample_noise(kernel: CorrelationKernel, grid: TimeGrid, seed: int,
                 index: int) -> NoiseRealization:
    """One realization; deterministic for fixed (seed, index)."""
    w = sample_noise_block(kernel, grid, seed, [index])[0]
    return NoiseRealization(w, seed=int(seed), index=int(index))


# ---------------------------------------------------------------------------
# running kernel integral F_ij(t) and its long-time behaviour

def f_matrix(kernel: CorrelationKernel, t: float, n_tau: int | None = None) -> np.ndarray:
    """F_ij(t) = int_0^t D_ij(t,s) ds.

    Analytic for white (c/2 for t > 0, the half-weight of the endpoint
    delta) and exponential kernels; trapezoidal quadrature in the time lag
    for tabulated spectral kernels.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = kernel.n_ops
    if t == 0:
        return np.zeros((n, n))
    if isinstance(kernel, WhiteKernel):
        return 0.5 * kernel.c
    if isinstance(kernel, ExponentialKernel):
        return 0.5 * kernel.c * (1.0 - np.exp(-kernel.lam * t))
    # resolve the fastest tabulated oscillation cos(omega_max * tau)
    if n_tau is None:
        n_tau = int(max(801, min(40000, np.ceil(12.0 * t * kernel.omega_max / np.pi))))
    tau = np.linspace(0.0, t, n_tau)
    return np.trapezoid(kernel.d_tau(tau), tau, axis=0)


def f_matrix_series(kernel: CorrelationKernel, grid: TimeGrid) -> np.ndarray:
    """F_ij at every grid knot, shape (M+1, N, N); cumulative in t."""
    n = kernel.n_ops
    if isinstance(kernel, WhiteKernel):
        out = np.broadcast_to(0.5 * kernel.c, (grid.steps + 1, n, n)).copy()
        out[0] = 0.0
        return out
    if isinstance(kernel, ExponentialKernel):
        env = 1.0 - np.exp(-kernel.lam * grid.times)
        return 0.5 * env[:, None, None] * kernel.c
    d_lattice = kernel.d_tau(grid.times)
    out = np.zeros((grid.steps + 1, n, n))
    mid = 0.5 * (d_lattice[1:] + d_lattice[:-1]) * grid.dt
    out[1:] = np.cumsum(mid, axis=0)
    return out


def g_matrix_series(kernel: CorrelationKernel, grid: TimeGrid) -> np.ndarray:
    """G_ij(t) = int_0^t F_ij(s) ds at every knot, shape (M+1, N, N)."""
    if isinstance(kernel, WhiteKernel):
        return 0.5 * grid.times[:, None, None] * kernel.c
    if isinstance(kernel, ExponentialKernel):
        lam = kernel.lam
        env = grid.times - (1.0 - np.exp(-lam * grid.times)) / lam
        return 0.5 * env[:, None, None] * kernel.c
    f = f_matrix_series(kernel, grid)
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * grid.dt, axis=0)
    return out


def spectral_f_limit(kernel: SpectralCutoffKernel):
    """Long-time limit pi * gamma(0) of F(t), with a reduction verdict.

    Returns (limit matrix, positive_definite flag, eigenvalues).
    """
    if not isinstance(kernel, SpectralCutoffKernel):
        raise TypeError("spectral limit is defined for tabulated spectral kernels")
    gamma0 = kernel.gamma_table[0]
    limit = np.pi * gamma0
    eig = np.linalg.eigvalsh(0.5 * (limit + limit.T))
    scale = max(1.0, float(np.max(np.abs(limit))))
    positive = bool(eig[0] > 1e-12 * scale)
    return limit, positive, eig


def f_limit(kernel: CorrelationKernel) -> np.ndarray:
    """t -> infinity limit of F_ij(t) (pi*gamma(0) for spectral kernels)."""
    if isinstance(kernel, (WhiteKernel, ExponentialKernel)):
        return 0.5 * kernel.c
    return np.pi * kernel.gamma_table[0]


# ---------------------------------------------------------------------------
# Gaussian functional-derivative identity checks

@dataclass(frozen=True)
class FunctionalCheck:
    """Two-sided Monte Carlo report for one functional of the noise."""

    functional: str
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float

    @property
    def discrepancy_sigma(self) -> float:
        se = np.hypot(self.lhs_stderr, self.rhs_stderr)
        return abs(self.lhs - self.rhs) / max(se, 1e-300)


def _d_on_grid(kernel: CorrelationKernel, grid: TimeGrid) -> np.ndarray:
    """(M+1, M+1, N, N) lattice of D_ij(t_k, t_l) for non-white kernels."""
    lat = kernel.d_tau(grid.times)
    idx = np.abs(np.arange(grid.steps + 1)[:, None] - np.arange(grid.steps + 1)[None, :])
    return lat[idx]


def check_furutsu_novikov(kernel: CorrelationKernel, grid: TimeGrid,
                          functional_id: str, n_samples: int,
                          seed: int = 0, i: int = 0, j: int = 0,
                          k: int = 0) -> FunctionalCheck:
    """Monte Carlo check of E[F.w_i(T)] against the kernel-weighted
    quadrature of the functional derivative of F.

    Functionals: "linear" (F = w_j at an interior knot), "quadratic"
    (F = w_j(t') w_k(t''), both sides vanish for centered Gaussian noise),
    "integral" (F = int_0^T w_j ds; with a white kernel the trapezoid
    endpoint produces the half-weight c/2 of the endpoint delta exactly).
    """
    if functional_id not in ("linear", "quadratic", "integral"):
        raise ValueError(f"unknown functional_id {functional_id!r}")
    m = grid.steps
    w = sample_noise_block(kernel, grid, seed, range(n_samples))  # (P, N, M+1)

    def mc(x):
        return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(len(x)))

    if kernel.is_white:
        # white samples are increment columns 0..M-1; the process value 'at T'
        # is the last increment and integrals are trapezoids over increments
        wt = w[:, i, m - 1]
        if functional_id == "integral":
            f_val = np.trapezoid(w[:, j, :m], dx=grid.dt, axis=1)
            lhs, lhs_se = mc(f_val * wt)
            rhs, rhs_se = float(f_matrix(kernel, grid.t_end)[i, j]), 0.0
        elif functional_id == "linear":
            kp = (m - 1) // 2
            f_val = w[:, j, kp]
            lhs, lhs_se = mc(f_val * wt)
            rhs, rhs_se = 0.0, 0.0   # increments at distinct knots are independent
        else:
            kp, kq = (m - 1) // 3, 2 * (m - 1) // 3
            f_val = w[:, j, kp] * w[:, k, kq]
            lhs, lhs_se = mc(f_val * wt)
            r1, s1 = mc(w[:, k, kq])
            r2, s2 = mc(w[:, j, kp])
            # only the derivative at the coincident knot survives the delta
            rhs = (kernel.c[i, j] / grid.dt * r1 if kp == m - 1 else 0.0) \
                + (kernel.c[i, k] / grid.dt * r2 if kq == m - 1 else 0.0)
            rhs_se = 0.0
        return FunctionalCheck(functional_id, lhs, lhs_se, rhs, rhs_se)

    wt = w[:, i, m]
    d_grid = _d_on_grid(kernel, grid)
    trap = np.full(m + 1, grid.dt)
    trap[0] = trap[-1] = 0.5 * grid.dt
    if functional_id == "linear":
        kp = m // 2
        lhs, lhs_se = mc(w[:, j, kp] * wt)
        rhs, rhs_se = float(d_grid[m, kp, i, j]), 0.0
    elif functional_id == "integral":
        f_val = np.trapezoid(w[:, j, :], dx=grid.dt, axis=1)
        lhs, lhs_se = mc(f_val * wt)
        rhs = float(np.sum(trap * d_grid[m, :, i, j]))
        rhs_se = 0.0
    else:
        kp, kq = m // 3, 2 * m // 3
        lhs, lhs_se = mc(w[:, j, kp] * w[:, k, kq] * wt)
        r1, s1 = mc(w[:, k, kq])
        r2, s2 = mc(w[:, j, kp])
        rhs = float(d_grid[m, kp, i, j]) * r1 + float(d_grid[m, kq, i, k]) * r2
        rhs_se = float(np.hypot(d_grid[m, kp, i, j] * s1, d_grid[m, kq, i, k] * s2))
    return FunctionalCheck(functional_id, lhs, lhs_se, rhs, rhs_se)
