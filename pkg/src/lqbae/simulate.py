"""Time-domain checks: moment flows, Euler–Maruyama ensembles, Gaussian filtering."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import algebra as alg
from . import qnd
from . import types as T
from .core import FilterError, HypothesisError, SimulationError
from .model import QuadratureRealization, SystemParams, channel_slice, coupling_rows, quadrature_realization
from .types import QuadBlock

log = logging.getLogger(__name__)

_BLOWUP = 1e12


@dataclass(frozen=True)
class GaussianPulse:
    """amplitude·exp(−(t − center)²/(2 width²)) on one input channel (all channels of the block if None)."""
    amplitude: float
    center: float
    width: float
    block: QuadBlock = QuadBlock.QuadP
    channel: Optional[int] = None

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValueError(f"pulse width must be > 0, got {self.width}")
        object.__setattr__(self, "block", QuadBlock(self.block))

    def __call__(self, t: float) -> float:
        return float(self.amplitude * np.exp(-0.5 * ((t - self.center) / self.width) ** 2))

    def input_mean(self, t: float, m: int) -> np.ndarray:
        u = np.zeros(2 * m)
        sl = channel_slice(self.block, m)
        if self.channel is None:
            u[sl] = self(t)
        else:
            if not 0 <= self.channel < m:
                raise ValueError(f"pulse channel {self.channel} out of range for m={m}")
            u[sl.start + self.channel] = self(t)
        return u


@dataclass(frozen=True)
class SimConfig:
    """dt=None picks 1e-3/‖𝔸‖ (capped at horizon/10). initial_cov=None is the vacuum ½I."""
    horizon: float = 10.0
    dt: Optional[float] = None
    seed: int = 0
    ensemble: int = 100
    pulse: Optional[GaussianPulse] = None
    initial_mean: Optional[Tuple[float, ...]] = None
    initial_cov: Optional[np.ndarray] = None
    measured: QuadBlock = QuadBlock.QuadQ

    def __post_init__(self) -> None:
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.horizon <= 0 or (self.dt is not None and self.horizon < self.dt):
            raise ValueError(f"horizon must be >= dt > 0, got horizon={self.horizon}, dt={self.dt}")
        if self.ensemble < 1:
            raise ValueError(f"ensemble must be >= 1, got {self.ensemble}")
        object.__setattr__(self, "measured", QuadBlock(self.measured))

    def resolve_dt(self, real: QuadratureRealization) -> float:
        if self.dt is not None:
            return float(self.dt)
        norm = float(np.linalg.norm(real.A, 2))
        dt = 1e-3 / norm if norm > 0 else 1e-3
        return min(dt, self.horizon / 10.0)

    def grid(self, real: QuadratureRealization) -> Tuple[np.ndarray, float]:
        dt = self.resolve_dt(real)
        steps = max(1, int(round(self.horizon / dt)))
        return np.arange(steps + 1) * dt, dt

    def start(self, real: QuadratureRealization) -> Tuple[np.ndarray, np.ndarray]:
        N = real.A.shape[0]
        m0 = np.zeros(N) if self.initial_mean is None else np.asarray(self.initial_mean, dtype=np.float64)
        P0 = 0.5 * np.eye(N) if self.initial_cov is None else np.asarray(self.initial_cov, dtype=np.float64)
        if m0.shape != (N,) or P0.shape != (N, N):
            raise ValueError(f"initial mean/cov must have dimension {N}")
        return m0, P0

    def input_mean(self, t: float, m: int) -> np.ndarray:
        return np.zeros(2 * m) if self.pulse is None else self.pulse.input_mean(t, m)


# -----------------------------
# Moment flow
# -----------------------------
@dataclass(frozen=True)
class MomentTrajectory:
    times: np.ndarray
    means: np.ndarray        # T x N
    covs: np.ndarray         # T x N x N
    output_means: np.ndarray  # T x 2m, ℂm + 𝔻u


def _rk4(f, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def moment_flow(real: QuadratureRealization, cfg: SimConfig) -> MomentTrajectory:
    """ṁ = 𝔸m + 𝔹u(t), Ṗ = 𝔸P + P𝔸ᵀ + ½𝔹𝔹ᵀ (vacuum input), fixed-step RK4."""
    A, B, C, D = real.A, real.B, real.C, real.D
    times, dt = cfg.grid(real)
    m_, P_ = cfg.start(real)
    Q = 0.5 * B @ B.T

    def mean_rhs(t, x):
        return A @ x + B @ cfg.input_mean(t, real.m)

    def cov_rhs(_t, P):
        return A @ P + P @ A.T + Q

    means = np.empty((len(times), len(m_)))
    covs = np.empty((len(times),) + P_.shape)
    outs = np.empty((len(times), 2 * real.m))
    for j, t in enumerate(times):
        means[j], covs[j] = m_, P_
        outs[j] = C @ m_ + D @ cfg.input_mean(t, real.m)
        if j + 1 == len(times):
            break
        m_ = _rk4(mean_rhs, m_, t, dt)
        P_ = _rk4(cov_rhs, P_, t, dt)
        if not (np.all(np.isfinite(P_)) and alg.max_abs(P_) < _BLOWUP):
            raise SimulationError(f"covariance blew up at t={t + dt:.4g}; try a smaller dt")
    return MomentTrajectory(times=times, means=means, covs=covs, output_means=outs)


# -----------------------------
# Stochastic trajectories
# -----------------------------
@dataclass(frozen=True)
class TrajectoryRecords:
    times: np.ndarray
    states: np.ndarray         # E x T x N
    output_increments: np.ndarray  # E x steps x 2m
    dt: float
    seed: int


def trajectory_generators(seed: int, ensemble: int) -> List[np.random.Generator]:
    """One counter-based stream per trajectory; trajectory k sees the same numbers for any ensemble >= k."""
    children = np.random.SeedSequence(seed).spawn(ensemble)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def _psd_sqrt(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((P + P.T) / 2)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _run_batch(real: QuadratureRealization, cfg: SimConfig, gens: Sequence[np.random.Generator],
               times: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    A, B, C, D = real.A, real.B, real.C, real.D
    steps = len(times) - 1
    N, M = A.shape[0], 2 * real.m
    m0, P0 = cfg.start(real)
    root = _psd_sqrt(P0)

    x0 = np.empty((len(gens), N))
    noise = np.empty((len(gens), steps, M))
    for k, gen in enumerate(gens):
        x0[k] = m0 + root @ gen.standard_normal(N)
        noise[k] = gen.normal(0.0, np.sqrt(0.5 * dt), size=(steps, M))

    states = np.empty((len(gens), steps + 1, N))
    dY = np.empty((len(gens), steps, M))
    x = x0
    states[:, 0] = x
    for j in range(steps):
        dU = cfg.input_mean(times[j], real.m) * dt + noise[:, j]
        dY[:, j] = x @ C.T * dt + dU @ D.T
        x = x + x @ A.T * dt + dU @ B.T
        states[:, j + 1] = x
    if not np.all(np.isfinite(states)):
        raise SimulationError("trajectory diverged; try a smaller dt")
    return states, dY


def _batches(cfg: SimConfig, batch: int) -> Iterator[List[np.random.Generator]]:
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    gens = trajectory_generators(cfg.seed, cfg.ensemble)
    for start in range(0, len(gens), batch):
        yield gens[start:start + batch]


def stochastic_trajectories(real: QuadratureRealization, cfg: SimConfig) -> TrajectoryRecords:
    """Euler–Maruyama for dx = 𝔸x dt + 𝔹dU, dY = ℂx dt + 𝔻dU with dU = u dt + N(0, ½dt)."""
    times, dt = cfg.grid(real)
    states, dY = _run_batch(real, cfg, trajectory_generators(cfg.seed, cfg.ensemble), times, dt)
    return TrajectoryRecords(times=times, states=states, output_increments=dY, dt=dt, seed=cfg.seed)


@dataclass(frozen=True)
class EnsembleMoments:
    times: np.ndarray
    state_mean: np.ndarray              # T x N
    state_var: np.ndarray               # T x N, population variance
    output_increment_mean: np.ndarray   # steps x 2m
    ensemble: int


def ensemble_moments(real: QuadratureRealization, cfg: SimConfig, batch: int = 64) -> EnsembleMoments:
    """Ensemble mean and variance per step, keeping one batch of trajectories in memory at a time.

    Batch statistics are merged pairwise, so the result matches the full
    ensemble of `stochastic_trajectories` up to rounding.
    """
    times, dt = cfg.grid(real)
    count = 0
    mean = m2 = y_mean = None
    for gens in _batches(cfg, batch):
        states, dY = _run_batch(real, cfg, gens, times, dt)
        b = states.shape[0]
        b_mean = states.mean(axis=0)
        b_m2 = np.sum((states - b_mean) ** 2, axis=0)
        b_y = dY.mean(axis=0)
        if count == 0:
            mean, m2, y_mean = b_mean, b_m2, b_y
        else:
            total = count + b
            delta = b_mean - mean
            mean = mean + delta * (b / total)
            m2 = m2 + b_m2 + delta ** 2 * (count * b / total)
            y_mean = y_mean + (b_y - y_mean) * (b / total)
        count += b
    return EnsembleMoments(times=times, state_mean=mean, state_var=m2 / count,
                           output_increment_mean=y_mean, ensemble=count)


# -----------------------------
# Gaussian filter
# -----------------------------
@dataclass(frozen=True)
class WhitenessReport:
    variance: float
    variance_band: float
    lag1: float
    lag1_band: float

    @property
    def passed(self) -> bool:
        return abs(self.variance - 1.0) <= self.variance_band and abs(self.lag1) <= self.lag1_band


@dataclass(frozen=True)
class FilterEnsemble:
    times: np.ndarray
    conditional_means: np.ndarray    # E x T x N
    conditional_cov: np.ndarray      # T x N x N, shared
    innovations: np.ndarray          # E x steps x m
    normalized_innovations: np.ndarray
    min_uncertainty_eigenvalue: float

    def whiteness(self) -> WhitenessReport:
        z = self.normalized_innovations
        E, steps, _ = z.shape
        n_var = z.size
        lag = z[:, 1:, :] * z[:, :-1, :]
        return WhitenessReport(
            variance=float(np.mean(z ** 2)),
            variance_band=3.0 * np.sqrt(2.0 / n_var),
            lag1=float(np.mean(lag)) if lag.size else 0.0,
            lag1_band=3.0 / np.sqrt(max(lag.size, 1)),
        )


def gaussian_filter(real: QuadratureRealization, records: TrajectoryRecords, cfg: SimConfig) -> FilterEnsemble:
    """Kalman–Bucy filter on the measured quadrature block with correlated process/measurement noise."""
    A, B, C, D = real.A, real.B, real.C, real.D
    rows = channel_slice(cfg.measured, real.m)
    Cq, Dq = C[rows], D[rows]
    Q = 0.5 * B @ B.T
    R = 0.5 * Dq @ Dq.T
    Sc = 0.5 * B @ Dq.T
    if np.linalg.matrix_rank(R) < R.shape[0]:
        raise FilterError("measurement noise covariance is singular")
    R_inv = np.linalg.inv(R)
    times, dt = records.times, records.dt
    steps = len(times) - 1
    m0, P0 = cfg.start(real)
    Jn = real.commutation_matrix()

    def riccati(_t, P):
        G = P @ Cq.T + Sc
        return A @ P + P @ A.T + Q - G @ R_inv @ G.T

    covs = np.empty((steps + 1,) + P0.shape)
    P = P0
    min_eig = np.inf
    for j in range(steps + 1):
        covs[j] = P
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(P + 0.5j * Jn))))
        if min_eig < -T.UNCERTAINTY_TOL:
            raise FilterError(
                f"conditional covariance violates the uncertainty bound at t={times[j]:.4g} (min eigenvalue {min_eig:.3e})"
            )
        if j < steps:
            P = _rk4(riccati, P, times[j], dt)
            P = (P + P.T) / 2
            if not np.all(np.isfinite(P)):
                raise FilterError(f"Riccati solution diverged at t={times[j + 1]:.4g}")

    E = records.states.shape[0]
    dYq = records.output_increments[:, :, rows]
    means = np.empty((E, steps + 1, len(m0)))
    innov = np.empty((E, steps, Cq.shape[0]))
    normed = np.empty_like(innov)
    mu = np.tile(m0, (E, 1))
    means[:, 0] = mu
    for j in range(steps):
        u = cfg.input_mean(times[j], real.m)
        K = (covs[j] @ Cq.T + Sc) @ R_inv
        dnu = dYq[:, j] - (mu @ Cq.T + Dq @ u) * dt
        innov[:, j] = dnu
        S_j = R * dt + Cq @ covs[j] @ Cq.T * dt ** 2
        L = np.linalg.cholesky(S_j)
        normed[:, j] = np.linalg.solve(L, dnu.T).T
        mu = mu + (mu @ A.T + B @ u) * dt + dnu @ K.T
        means[:, j + 1] = mu
    return FilterEnsemble(
        times=times,
        conditional_means=means,
        conditional_cov=covs,
        innovations=innov,
        normalized_innovations=normed,
        min_uncertainty_eigenvalue=min_eig,
    )


# -----------------------------
# Martingale and injection checks
# -----------------------------
@dataclass(frozen=True)
class ChannelDrift:
    channel: int
    mean_start: complex
    mean_end: complex
    stderr: float

    @property
    def drift(self) -> float:
        return abs(self.mean_end - self.mean_start)

    @property
    def passed(self) -> bool:
        return self.drift <= 3.0 * self.stderr


@dataclass(frozen=True)
class MartingaleReport:
    channels: Tuple[ChannelDrift, ...]
    ensemble: int
    horizon: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.channels)


def martingale_check(params: SystemParams, cfg: SimConfig, enforce_preconditions: bool = True,
                     tol: float = T.CERTIFY_TOL, batch: int = 256) -> MartingaleReport:
    """E[π_T(L_j)] = E[π_0(L_j)] within three standard errors, for every channel j.

    Trajectories are simulated and filtered `batch` at a time; only π_0 and π_T
    of each trajectory are kept.
    """
    if enforce_preconditions:
        if not qnd.is_qnd_interaction(params, tol):
            raise HypothesisError("[L, H] = 0", qnd.commutator_LH(params).residual)
        sa = qnd.is_self_adjoint(params, tol)
        if not sa.holds:
            raise HypothesisError("L self-adjoint (C_minus = C_plus^#)", sa.residual)
    real = quadrature_realization(params)
    Lq, Lp = coupling_rows(params)
    Lam = np.hstack([Lq, Lp])
    times, dt = cfg.grid(real)
    starts, ends = [], []
    for gens in _batches(cfg, batch):
        states, dY = _run_batch(real, cfg, gens, times, dt)
        records = TrajectoryRecords(times=times, states=states, output_increments=dY, dt=dt, seed=cfg.seed)
        filt = gaussian_filter(real, records, cfg)
        starts.append(filt.conditional_means[:, 0] @ Lam.T)   # b x m
        ends.append(filt.conditional_means[:, -1] @ Lam.T)
    pi0, piT = np.concatenate(starts), np.concatenate(ends)
    diff = piT - pi0
    E = cfg.ensemble
    out = []
    for j in range(params.m):
        d = diff[:, j]
        spread = np.sqrt(np.var(d.real) + np.var(d.imag))
        out.append(ChannelDrift(
            channel=j,
            mean_start=complex(np.mean(pi0[:, j])),
            mean_end=complex(np.mean(piT[:, j])),
            stderr=float(spread / np.sqrt(E)),
        ))
    report = MartingaleReport(channels=tuple(out), ensemble=E, horizon=float(times[-1]))
    log.info("martingale check: %s", "pass" if report.passed else "drift detected")
    return report


def injection_bae_test(real: QuadratureRealization, in_block: QuadBlock, out_block: QuadBlock,
                       signal: GaussianPulse, cfg: SimConfig) -> float:
    """max_t ‖Δ mean of out_block‖ between runs with and without `signal` on in_block."""
    pulse = replace(signal, block=QuadBlock(in_block))
    base = moment_flow(real, replace(cfg, pulse=None))
    driven = moment_flow(real, replace(cfg, pulse=pulse))
    rows = channel_slice(QuadBlock(out_block), real.m)
    delta = driven.output_means[:, rows] - base.output_means[:, rows]
    return float(np.max(np.abs(delta))) if delta.size else 0.0


def write_columns(path: str, times: np.ndarray, values: np.ndarray, labels: Sequence[str]) -> None:
    """Columnar text: one header line naming the columns, then one row per time."""
    values = np.asarray(values, dtype=np.float64).reshape(len(times), -1)
    if values.shape[1] != len(labels):
        raise ValueError(f"{values.shape[1]} columns but {len(labels)} labels")
    data = np.column_stack([times, values])
    np.savetxt(path, data, fmt="%.17g", header=" ".join(["t", *labels]), comments="# ")
