"""Controllable / observable subspaces, Kalman-form checks and the Kalman BAE criteria."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from scipy import linalg as sla

from . import algebra as alg
from . import types as T
from .core import NotPhysicallyRealizableError, ShapeError
from .model import QuadratureRealization

log = logging.getLogger(__name__)


class SubspaceKind(str, Enum):
    Controllable = "Controllable"
    Unobservable = "Unobservable"
    ObservableRows = "ObservableRows"


@dataclass(frozen=True)
class SubspaceBasis:
    basis: np.ndarray  # N x k, orthonormal columns
    kind: SubspaceKind

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    @property
    def ambient(self) -> int:
        return int(self.basis.shape[0])

    def distance(self, v) -> float:
        """‖v − QQᵀv‖ / ‖v‖."""
        v = np.asarray(v, dtype=np.float64).ravel()
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return 0.0
        Q = self.basis
        return float(np.linalg.norm(v - Q @ (Q.T @ v))) / nv


def _real(X, name: str) -> np.ndarray:
    X = np.asarray(X)
    if np.iscomplexobj(X):
        if alg.max_abs(X.imag) > 0:
            raise ShapeError(f"{name} must be real")
        X = X.real
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _orth(X: np.ndarray, rank_tol: float) -> np.ndarray:
    if X.size == 0 or not np.any(X):
        return np.zeros((X.shape[0], 0))
    return sla.orth(X, rcond=rank_tol)


def controllable_subspace(A, B, rank_tol: float = T.RANK_TOL) -> SubspaceBasis:
    """Orthonormal basis of range[B AB … A^{N−1}B], grown by Krylov iteration."""
    A = _real(A, "A")
    N = A.shape[0]
    if A.shape != (N, N):
        raise ShapeError(f"A must be square, got {A.shape}")
    B = np.asarray(B, dtype=np.float64).reshape(N, -1)
    An = A / max(1.0, float(np.linalg.norm(A, 2)))
    Q = _orth(B, rank_tol)
    for _ in range(N):
        if Q.shape[1] in (0, N):
            break
        grown = _orth(np.hstack([Q, An @ Q]), rank_tol)
        if grown.shape[1] == Q.shape[1]:
            break
        Q = grown
    return SubspaceBasis(Q, SubspaceKind.Controllable)


def observable_rowspace(A, C, rank_tol: float = T.RANK_TOL) -> SubspaceBasis:
    """Functionals cᵀx readable from the output: row space of the observability matrix."""
    A = _real(A, "A")
    C = np.asarray(C, dtype=np.float64).reshape(-1, A.shape[0])
    Q = controllable_subspace(A.T, C.T, rank_tol).basis
    return SubspaceBasis(Q, SubspaceKind.ObservableRows)


def unobservable_subspace(A, C, rank_tol: float = T.RANK_TOL) -> SubspaceBasis:
    A = _real(A, "A")
    N = A.shape[0]
    rows = observable_rowspace(A, C, rank_tol).basis
    if rows.shape[1] == 0:
        return SubspaceBasis(np.eye(N), SubspaceKind.Unobservable)
    if rows.shape[1] == N:
        return SubspaceBasis(np.zeros((N, 0)), SubspaceKind.Unobservable)
    return SubspaceBasis(sla.null_space(rows.T), SubspaceKind.Unobservable)


def is_observable_pair(M, C, rank_tol: float = T.RANK_TOL) -> bool:
    M = _real(M, "M")
    C = np.asarray(C, dtype=np.float64).reshape(-1, M.shape[0])
    return observable_rowspace(M, C, rank_tol).dim == M.shape[0]


def controllability_matrix(A, B, horizon: int = 0) -> np.ndarray:
    """[B AB … A^{h−1}B], h defaults to the state dimension."""
    A = _real(A, "A")
    N = A.shape[0]
    B = np.asarray(B, dtype=np.float64).reshape(N, -1)
    blocks = []
    X = B
    for _ in range(horizon or N):
        blocks.append(X)
        X = A @ X
    return np.hstack(blocks)


def functional_residuals(c, real: QuadratureRealization, rank_tol: float = T.RANK_TOL) -> Tuple[float, float]:
    """(‖Q_Rᵀc‖/‖c‖, ‖c − Q_O Q_Oᵀc‖/‖c‖): zero first entry means uncontrollable, zero second means observable."""
    c = np.asarray(c, dtype=np.float64).ravel()
    nc = float(np.linalg.norm(c))
    if nc == 0.0:
        raise ValueError("functional coefficient vector must be nonzero")
    R = controllable_subspace(real.A, real.B, rank_tol).basis
    unc = float(np.linalg.norm(R.T @ c)) / nc
    obs = observable_rowspace(real.A, real.C, rank_tol).distance(c)
    return unc, obs


def qnd_functional_basis(real: QuadratureRealization, rank_tol: float = T.RANK_TOL) -> np.ndarray:
    """Orthonormal basis of (R + N)^⊥: functionals orthogonal to R and inside the observable row space."""
    R = controllable_subspace(real.A, real.B, rank_tol).basis
    U = unobservable_subspace(real.A, real.C, rank_tol).basis
    N = real.A.shape[0]
    span = _orth(np.hstack([R, U]), rank_tol)
    if span.shape[1] == 0:
        return np.eye(N)
    if span.shape[1] == N:
        return np.zeros((N, 0))
    return sla.null_space(span.T)


# -----------------------------
# Subsystem dimensions
# -----------------------------
@dataclass(frozen=True)
class SubsystemDimensions:
    n1_co: int
    n2_cbarobar: int
    n3_h: int
    dims: Dict[str, int] = field(default_factory=dict)


def subsystem_dimensions(real: QuadratureRealization, rank_tol: float = T.RANK_TOL) -> SubsystemDimensions:
    """Mode counts of the co, c̄ō and h parts from the controllable/unobservable lattice."""
    R = controllable_subspace(real.A, real.B, rank_tol).basis
    U = unobservable_subspace(real.A, real.C, rank_tol).basis
    total = real.A.shape[0]
    dim_sum = _orth(np.hstack([R, U]), rank_tol).shape[1]
    c_obar = R.shape[1] + U.shape[1] - dim_sum
    c_o = R.shape[1] - c_obar
    cbar_o = total - dim_sum
    cbar_obar = U.shape[1] - c_obar
    dims = {"c_o": c_o, "c_obar": c_obar, "cbar_o": cbar_o, "cbar_obar": cbar_obar,
            "controllable": R.shape[1], "unobservable": U.shape[1]}
    log.debug("Kalman lattice dimensions %s", dims)
    if c_obar != cbar_o:
        raise NotPhysicallyRealizableError(
            f"dim(controllable & unobservable) = {c_obar} but dim(uncontrollable & observable) = {cbar_o}"
        )
    if c_o % 2 or cbar_obar % 2:
        raise NotPhysicallyRealizableError(f"co / c̄ō parts must have even dimension, got {c_o} / {cbar_obar}")
    return SubsystemDimensions(n1_co=c_o // 2, n2_cbarobar=cbar_obar // 2, n3_h=c_obar, dims=dims)


# -----------------------------
# Kalman-form partitions
# -----------------------------
@dataclass(frozen=True)
class KalmanPartition:
    """Realization in Kalman coordinates x̄ = [q_h; p_h; x_co; x_c̄ō].

    q_h and p_h hold n_h variables each, x_co holds 2·n_co ([q; p] ordered)
    and x_c̄ō holds 2·n_cc.
    """
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    n_h: int
    n_co: int
    n_cc: int

    def __post_init__(self) -> None:
        N = 2 * (self.n_h + self.n_co + self.n_cc)
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        if min(self.n_h, self.n_co, self.n_cc) < 0:
            raise ShapeError("partition sizes must be >= 0")
        if A.shape != (N, N):
            raise ShapeError(f"A has shape {A.shape}, expected {(N, N)} for the partition")
        if B.shape[0] != N or B.shape[1] % 2:
            raise ShapeError(f"B has shape {B.shape}, expected ({N}, 2m)")
        if C.shape != (B.shape[1], N):
            raise ShapeError(f"C has shape {C.shape}, expected {(B.shape[1], N)}")
        for name, X in (("A", A), ("B", B), ("C", C)):
            object.__setattr__(self, name, alg._frozen(X))

    @property
    def m(self) -> int:
        return self.B.shape[1] // 2

    @property
    def slices(self) -> Dict[str, slice]:
        h, co, cc = self.n_h, 2 * self.n_co, 2 * self.n_cc
        return {
            "q_h": slice(0, h),
            "p_h": slice(h, 2 * h),
            "co": slice(2 * h, 2 * h + co),
            "cc": slice(2 * h + co, 2 * h + co + cc),
        }

    def _a(self, r: str, c: str) -> np.ndarray:
        s = self.slices
        return self.A[s[r], s[c]]

    @property
    def A_h11(self) -> np.ndarray:
        return self._a("q_h", "q_h")

    @property
    def A_h12(self) -> np.ndarray:
        return self._a("q_h", "p_h")

    @property
    def A_h22(self) -> np.ndarray:
        return self._a("p_h", "p_h")

    @property
    def A_12(self) -> np.ndarray:
        return self._a("q_h", "co")

    @property
    def A_13(self) -> np.ndarray:
        return self._a("q_h", "cc")

    @property
    def A_21(self) -> np.ndarray:
        return self._a("co", "p_h")

    @property
    def A_31(self) -> np.ndarray:
        return self._a("cc", "p_h")

    @property
    def A_co(self) -> np.ndarray:
        return self._a("co", "co")

    @property
    def A_cbaro(self) -> np.ndarray:
        return self._a("cc", "co")

    @property
    def A_cbarobar(self) -> np.ndarray:
        return self._a("cc", "cc")

    @property
    def B_h(self) -> np.ndarray:
        return self.B[self.slices["q_h"], :]

    @property
    def B_co(self) -> np.ndarray:
        return self.B[self.slices["co"], :]

    @property
    def C_h(self) -> np.ndarray:
        return self.C[:, self.slices["p_h"]]

    @property
    def C_co(self) -> np.ndarray:
        return self.C[:, self.slices["co"]]

    def zero_blocks(self) -> Dict[str, np.ndarray]:
        s = self.slices
        return {
            "A[p_h,q_h]": self._a("p_h", "q_h"),
            "A[p_h,co]": self._a("p_h", "co"),
            "A[p_h,cc]": self._a("p_h", "cc"),
            "A[co,q_h]": self._a("co", "q_h"),
            "A[co,cc]": self._a("co", "cc"),
            "A[cc,q_h]": self._a("cc", "q_h"),
            "B[p_h]": self.B[s["p_h"], :],
            "B[cc]": self.B[s["cc"], :],
            "C[q_h]": self.C[:, s["q_h"]],
            "C[cc]": self.C[:, s["cc"]],
        }


@dataclass(frozen=True)
class KalmanFormReport:
    verdict: bool
    residuals: Dict[str, float]
    offending: Tuple[str, ...]
    co_output_residual: float
    h_output_residual: float


def verify_kalman_form(part: KalmanPartition, tol: float = 1e-10) -> KalmanFormReport:
    """Sparsity of Ā, B̄, C̄. The co output identity C_coA_co = ½C_coB_coC_co and the
    h output identity are reported alongside but do not enter the verdict."""
    residuals = {name: alg.max_abs(X) for name, X in part.zero_blocks().items()}
    offending = tuple(name for name, r in residuals.items() if r > tol)

    C_co, B_co, A_co = part.C_co, part.B_co, part.A_co
    co_res = alg.max_abs(C_co @ A_co - 0.5 * C_co @ B_co @ C_co) if part.n_co else 0.0
    if part.n_h:
        h_expr = part.C_h @ part.A_h22 + 0.5 * C_co @ B_co @ alg.symplectic_j(part.m) @ part.B_h.T
        if part.n_co:
            h_expr = h_expr + C_co @ alg.symplectic_j(part.n_co) @ part.A_12.T
        h_res = alg.max_abs(h_expr)
    else:
        h_res = 0.0
    if offending:
        log.info("Kalman form violated in %s", ", ".join(offending))
    return KalmanFormReport(
        verdict=not offending,
        residuals=residuals,
        offending=offending,
        co_output_residual=co_res,
        h_output_residual=h_res,
    )


# -----------------------------
# BAE criteria in Kalman form
# -----------------------------
@dataclass(frozen=True)
class GammaSymmetry:
    re_residual: float
    im_residual: float
    combined_residual: float
    re_symmetric: bool
    im_symmetric: bool
    combined_symmetric: bool


@dataclass(frozen=True)
class KalmanBAECriteria:
    q_wrt_p: bool
    p_wrt_q: bool
    q_residual: float
    p_residual: float
    gamma_symmetry: GammaSymmetry


def _antisym(X: np.ndarray) -> float:
    return alg.max_abs(X - X.T)


def kalman_bae_criteria(C_co, B_co, tol: float = T.CERTIFY_TOL) -> KalmanBAECriteria:
    """q_out is BAE w.r.t. p_in iff C_co,q B_co,p = 0; p_out w.r.t. q_in iff C_co,p B_co,q = 0."""
    C_co = _real(C_co, "C_co")
    B_co = _real(B_co, "B_co")
    if C_co.shape[0] % 2 or C_co.shape[1] % 2 or B_co.shape != C_co.shape[::-1]:
        raise ShapeError(f"C_co must be 2m x 2n1 and B_co 2n1 x 2m, got {C_co.shape} and {B_co.shape}")
    m, n1 = C_co.shape[0] // 2, C_co.shape[1] // 2
    Cq, Cp = C_co[:m], C_co[m:]
    Bq, Bp = B_co[:, :m], B_co[:, m:]
    bound = tol * max(1.0, alg.max_abs(C_co) * alg.max_abs(B_co))
    q_res = alg.max_abs(Cq @ Bp)
    p_res = alg.max_abs(Cp @ Bq)

    s = 1.0 / np.sqrt(2.0)
    re_q, re_p = s * C_co[:m, :n1], s * C_co[:m, n1:]
    im_q, im_p = s * C_co[m:, :n1], s * C_co[m:, n1:]
    re = _antisym(re_q @ re_p.T)
    im = _antisym(im_q @ im_p.T)
    combined = _antisym(re_q @ re_p.T - im_q @ im_p.T)
    gbound = tol * max(1.0, alg.max_abs(C_co) ** 2)
    return KalmanBAECriteria(
        q_wrt_p=q_res <= bound,
        p_wrt_q=p_res <= bound,
        q_residual=q_res,
        p_residual=p_res,
        gamma_symmetry=GammaSymmetry(
            re_residual=re,
            im_residual=im,
            combined_residual=combined,
            re_symmetric=re <= gbound,
            im_symmetric=im <= gbound,
            combined_symmetric=combined <= gbound,
        ),
    )


def partition_realization(part: KalmanPartition) -> QuadratureRealization:
    """The partitioned system as a realization with unit feedthrough, states labelled in Kalman order."""
    labels: List[str] = [f"q{j}" for j in range(1, part.n_h + 1)] + [f"p{j}" for j in range(1, part.n_h + 1)]
    k = part.n_h
    labels += [f"q{k + j}" for j in range(1, part.n_co + 1)] + [f"p{k + j}" for j in range(1, part.n_co + 1)]
    k += part.n_co
    labels += [f"q{k + j}" for j in range(1, part.n_cc + 1)] + [f"p{k + j}" for j in range(1, part.n_cc + 1)]
    return QuadratureRealization(A=part.A, B=part.B, C=part.C, D=np.eye(2 * part.m), state_labels=tuple(labels))
