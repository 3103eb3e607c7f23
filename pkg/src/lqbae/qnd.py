"""Commutators with the Hamiltonian, QND-interaction tests and QND variables."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import algebra as alg
from . import kalman
from . import types as T
from .core import HypothesisError, InternalConsistencyError, ShapeError
from .model import QuadratureRealization, SystemParams, coupling_rows, quadrature_realization
from .types import ComplexMatrix, QuadBlock

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommutatorCoefficients:
    """[X, H] = coeff_a·a + coeff_adag·a^# for a linear operator X."""
    coeff_a: ComplexMatrix
    coeff_adag: ComplexMatrix

    @property
    def residual(self) -> float:
        return max(alg.max_abs(self.coeff_a), alg.max_abs(self.coeff_adag))

    def is_zero(self, tol: float) -> bool:
        return self.residual <= tol


@dataclass(frozen=True)
class StructuralCheck:
    name: str
    holds: bool
    residual: float


def _commutator(Cm: ComplexMatrix, Cp: ComplexMatrix, params: SystemParams) -> CommutatorCoefficients:
    Om, Op = params.Omega_minus, params.Omega_plus
    return CommutatorCoefficients(
        coeff_a=Cm @ Om - Cp @ Op.conj().T,
        coeff_adag=Cm @ Op - Cp @ Om.T,
    )


def commutator_LH(params: SystemParams) -> CommutatorCoefficients:
    return _commutator(params.C_minus, params.C_plus, params)


def commutator_LdagH(params: SystemParams) -> CommutatorCoefficients:
    """L^# = C₊^#a + C₋^#a^#."""
    return _commutator(params.C_plus.conj(), params.C_minus.conj(), params)


def commutator_quadrature_sum(params: SystemParams) -> CommutatorCoefficients:
    """[L + L*, H]."""
    Cm, Cp = params.C_minus, params.C_plus
    return _commutator(Cm + Cp.conj(), Cp + Cm.conj(), params)


def commutator_quadrature_difference(params: SystemParams) -> CommutatorCoefficients:
    """[L − L*, H]."""
    Cm, Cp = params.C_minus, params.C_plus
    return _commutator(Cm - Cp.conj(), Cp - Cm.conj(), params)


def _interaction_scale(params: SystemParams) -> float:
    return 1.0 + alg.max_abs(params.coupling.full()) * alg.max_abs(params.hamiltonian.full())


def qnd_interaction_residuals(params: SystemParams) -> Tuple[float, float]:
    """Residuals of the two equivalent [L, H] = 0 forms: the coefficient pair and 𝒞Ω − 2Δ(C₋,0)Ω."""
    r_pair = commutator_LH(params).residual
    Omega = params.hamiltonian.full()
    C_full = params.coupling.full()
    C0 = alg.doubled_up(params.C_minus, np.zeros_like(params.C_minus)).full()
    r_matrix = alg.max_abs(C_full @ Omega - 2.0 * C0 @ Omega)
    return r_pair, r_matrix


def is_qnd_interaction(params: SystemParams, tol: float = T.CERTIFY_TOL) -> bool:
    r_pair, r_matrix = qnd_interaction_residuals(params)
    bound = tol * _interaction_scale(params)
    pair_ok, matrix_ok = r_pair <= bound, r_matrix <= bound
    if pair_ok != matrix_ok:
        log.warning("[L,H] tests disagree: pair residual %.3e, matrix residual %.3e", r_pair, r_matrix)
    return pair_ok and matrix_ok


def is_self_adjoint(params: SystemParams, tol: float = T.CERTIFY_TOL) -> StructuralCheck:
    """L = L* componentwise, i.e. C₋ = C₊^#."""
    r = alg.max_abs(params.C_minus - params.C_plus.conj())
    return StructuralCheck("self_adjoint", r <= tol * (1.0 + alg.max_abs(params.C_minus)), r)


def is_commuting(params: SystemParams, tol: float = T.CERTIFY_TOL) -> StructuralCheck:
    """[L_j, L_k] = 0 for all j, k, i.e. C₋C₊ᵀ symmetric."""
    X = params.C_minus @ params.C_plus.T
    r = alg.max_abs(X - X.T)
    return StructuralCheck("commuting", r <= tol * (1.0 + alg.max_abs(params.coupling.full()) ** 2), r)


def siso_g(params: SystemParams) -> float:
    """g = Σ_j (|C₋,j|² − |C₊,j|²)."""
    if params.m != 1:
        raise ShapeError(f"siso_g needs m = 1, got m = {params.m}")
    return float(np.sum(np.abs(params.C_minus) ** 2) - np.sum(np.abs(params.C_plus) ** 2))


# -----------------------------
# Consequences of [L, H] = 0
# -----------------------------
@dataclass(frozen=True)
class QNDConsequences:
    self_adjoint: StructuralCheck
    commuting: StructuralCheck
    transfer_is_feedthrough: bool
    markov_residual: float
    dL_vanishes: bool
    dL_residual: float

    @property
    def failed(self) -> List[str]:
        return [c.name for c in (self.self_adjoint, self.commuting) if not c.holds]


def qnd_interaction_consequences(params: SystemParams, tol: float = T.CERTIFY_TOL) -> QNDConsequences:
    """With [L, H] = 0, a self-adjoint commuting L freezes L and leaves G[s] = 𝔻."""
    if not is_qnd_interaction(params, tol):
        raise HypothesisError("[L, H] = 0", commutator_LH(params).residual)
    sa = is_self_adjoint(params, tol)
    comm = is_commuting(params, tol)
    if sa.holds and comm.holds:
        log.debug("self-adjoint commuting L under [L,H]=0: feedthrough expected")

    real = quadrature_realization(params)
    norm_A = float(np.linalg.norm(real.A, 2))
    norm_CB = float(np.linalg.norm(real.C, 2) * np.linalg.norm(real.B, 2))
    feedthrough = True
    worst = 0.0
    X = real.B
    for k in range(real.A.shape[0]):
        r = alg.max_abs(real.C @ X)
        worst = max(worst, r)
        if r > tol * max(1.0, norm_CB * norm_A ** k):
            feedthrough = False
        X = real.A @ X

    Lq, Lp = coupling_rows(params)
    Lam = np.hstack([Lq, Lp])
    dL = max(alg.max_abs(Lam @ real.A), alg.max_abs(Lam @ real.B))
    dL_scale = 1.0 + alg.max_abs(Lam) * (alg.max_abs(real.A) + alg.max_abs(real.B))
    return QNDConsequences(
        self_adjoint=sa,
        commuting=comm,
        transfer_is_feedthrough=feedthrough,
        markov_residual=worst,
        dL_vanishes=dL <= tol * dL_scale,
        dL_residual=dL,
    )


# -----------------------------
# QND variables
# -----------------------------
@dataclass(frozen=True)
class QNDVariableReport:
    """A functional cᵀx of the quadrature state; QND iff uncontrollable and observable."""
    variable: str
    coefficients: np.ndarray
    uncontrollable: bool
    observable: bool
    uncontrollable_residual: float = 0.0
    observable_residual: float = 0.0
    origin: str = "scan"
    observable_pairs: Tuple[bool, ...] = ()
    closed_form_residual: Optional[float] = None
    notes: Tuple[str, ...] = field(default=())

    @property
    def is_qnd(self) -> bool:
        return self.uncontrollable and self.observable


def functional_report(real: QuadratureRealization, c, name: str, origin: str,
                      rank_tol: float = T.RANK_TOL, tol: float = T.CERTIFY_TOL) -> QNDVariableReport:
    """Classify one functional (or a block of them, one per row of `c`)."""
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    unc, obs = 0.0, 0.0
    for row in c:
        u, o = kalman.functional_residuals(row, real, rank_tol)
        unc, obs = max(unc, u), max(obs, o)
    return QNDVariableReport(
        variable=name,
        coefficients=c[0] if c.shape[0] == 1 else c,
        uncontrollable=unc <= tol,
        observable=obs <= tol,
        uncontrollable_residual=unc,
        observable_residual=obs,
        origin=origin,
    )


def qnd_scan(real: QuadratureRealization, rank_tol: float = T.RANK_TOL,
             tol: float = T.CERTIFY_TOL) -> List[QNDVariableReport]:
    """Basis of the uncontrollable-yet-observable functionals, (R + N)^⊥, at most n of them."""
    basis = kalman.qnd_functional_basis(real, rank_tol)
    reports = []
    for j in range(min(basis.shape[1], real.n)):
        c = basis[:, j]
        # sign so that the largest entry is positive; output stays deterministic
        k = int(np.argmax(np.abs(c)))
        c = c if c[k] >= 0 else -c
        reports.append(functional_report(real, c, f"c{j + 1}", "scan", rank_tol, tol))
    return reports


def _block_vector(real: QuadratureRealization, block: QuadBlock) -> np.ndarray:
    idx = real.state_indices(block)
    E = np.zeros((len(idx), real.A.shape[0]))
    for r, i in enumerate(idx):
        E[r, i] = 1.0
    return E


def _case_closed_forms(params: SystemParams, real: QuadratureRealization, block: QuadBlock) -> float:
    """Residual of 𝔸, 𝔹, ℂ against the equations of motion of the p- or q-coupled case."""
    n = params.n
    Re, Im = params.C_minus.real, params.C_minus.imag
    R = params.Omega_minus.real
    ImO = params.Omega_minus.imag
    Z = np.zeros((n, n))
    Zc = np.zeros_like(Re)
    if block is QuadBlock.QuadP:
        A = np.block([[Z, 2 * R + 2 * Re.T @ Im - 2 * Im.T @ Re], [Z, 2 * ImO]])
        C = 2.0 * np.block([[Zc, -Im], [Zc, Re]])
        B = 2.0 * np.block([[-Re.T, -Im.T], [Zc.T, Zc.T]]) @ real.D
    else:
        A = np.block([[2 * ImO, Z], [-2 * R + 2 * Im.T @ Re - 2 * Re.T @ Im, Z]])
        C = 2.0 * np.block([[Re, Zc], [Im, Zc]])
        B = 2.0 * np.block([[Zc.T, Zc.T], [Im.T, -Re.T]]) @ real.D
    return max(alg.max_abs(real.A - A), alg.max_abs(real.B - B), alg.max_abs(real.C - C))


def qnd_characterize(params: SystemParams, rank_tol: float = T.RANK_TOL,
                     tol: float = T.CERTIFY_TOL) -> List[QNDVariableReport]:
    """QND variables of a system.

    p-coupling (C₋ = −C₊) with Ω₋ = −Ω₊ makes the p block a candidate, observable
    through (Im Ω₋, −Im C₋) or (Im Ω₋, Re C₋); q-coupling with Ω₋ = Ω₊ mirrors it.
    Anything else falls back to the subspace scan.
    """
    real = quadrature_realization(params)
    scale_c = tol * (1.0 + alg.max_abs(params.coupling.full()))
    scale_o = tol * (1.0 + alg.max_abs(params.hamiltonian.full()))
    Cm, Cp = params.C_minus, params.C_plus
    Om, Op = params.Omega_minus, params.Omega_plus
    ImO = Om.imag

    reports: List[QNDVariableReport] = []
    if alg.max_abs(Cm + Cp) <= scale_c and alg.max_abs(Om + Op) <= scale_o:
        block, pairs = QuadBlock.QuadP, ((ImO, -Cm.imag), (ImO, Cm.real))
        origin = "p-coupling"
    elif alg.max_abs(Cm - Cp) <= scale_c and alg.max_abs(Om - Op) <= scale_o:
        block, pairs = QuadBlock.QuadQ, ((ImO, Cm.real), (ImO, Cm.imag))
        origin = "q-coupling"
    else:
        return qnd_scan(real, rank_tol, tol)

    closed = _case_closed_forms(params, real, block)
    bound = 1e-10 * (1.0 + alg.max_abs(real.A) + alg.max_abs(real.B) + alg.max_abs(real.C))
    if closed > bound:
        raise InternalConsistencyError(f"{origin} equations of motion differ from the realization by {closed:.3e}")
    obs_pairs = tuple(kalman.is_observable_pair(M, C, rank_tol) for M, C in pairs)
    E = _block_vector(real, block)
    base = functional_report(real, E, block.value, origin, rank_tol, tol)
    reports.append(QNDVariableReport(
        variable=block.value,
        coefficients=E,
        uncontrollable=base.uncontrollable,
        observable=any(obs_pairs),
        uncontrollable_residual=base.uncontrollable_residual,
        observable_residual=base.observable_residual,
        origin=origin,
        observable_pairs=obs_pairs,
        closed_form_residual=closed,
    ))
    return reports
