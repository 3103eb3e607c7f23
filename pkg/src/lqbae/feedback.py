"""Coherent feedback through a beamsplitter, and the direct-coupling optomechanical QND system."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from . import algebra as alg
from . import bae
from . import kalman
from . import qnd
from . import types as T
from .core import (
    ConventionMismatchError,
    IllPosedLoopError,
    InvalidParamsError,
    Issue,
    ShapeError,
    _issue,
)
from .model import QuadratureRealization, SystemParams, quadrature_realization, validate
from .profiles import DEFAULT_PROFILES, ToleranceProfile
from .types import ComplexMatrix

log = logging.getLogger(__name__)

_K_NAMES = ("k11", "k12", "k21", "k22")


# -----------------------------
# Plant / beamsplitter
# -----------------------------
@dataclass(frozen=True)
class PartitionedPlant:
    """Plant with channel groups 1 (m1, kept) and 2 (m2, fed back).

    L₁ = k11·a + k12·a^#, L₂ = k21·a + k22·a^#, S_G = [[S11, S12], [S21, S22]].
    """
    S11: ComplexMatrix
    S12: ComplexMatrix
    S21: ComplexMatrix
    S22: ComplexMatrix
    k11: ComplexMatrix
    k12: ComplexMatrix
    k21: ComplexMatrix
    k22: ComplexMatrix
    Omega_minus: ComplexMatrix
    Omega_plus: ComplexMatrix

    def __post_init__(self) -> None:
        n = alg.as_matrix(self.Omega_minus).shape[0]
        m1 = alg.as_matrix(self.S11).shape[0]
        m2 = alg.as_matrix(self.S22).shape[0]
        shapes = {
            "S11": (m1, m1), "S12": (m1, m2), "S21": (m2, m1), "S22": (m2, m2),
            "k11": (m1, n), "k12": (m1, n), "k21": (m2, n), "k22": (m2, n),
            "Omega_minus": (n, n), "Omega_plus": (n, n),
        }
        for name, (r, c) in shapes.items():
            object.__setattr__(self, name, alg._frozen(alg.as_matrix(getattr(self, name), rows=r, cols=c, name=name)))

    @property
    def n(self) -> int:
        return self.Omega_minus.shape[0]

    @property
    def m1(self) -> int:
        return self.S11.shape[0]

    @property
    def m2(self) -> int:
        return self.S22.shape[0]

    @property
    def S_G(self) -> ComplexMatrix:
        return np.block([[self.S11, self.S12], [self.S21, self.S22]])

    def to_params(self) -> SystemParams:
        return SystemParams(
            S=self.S_G,
            C_minus=np.vstack([self.k11, self.k21]),
            C_plus=np.vstack([self.k12, self.k22]),
            Omega_minus=self.Omega_minus,
            Omega_plus=self.Omega_plus,
        )

    def couplings(self) -> Dict[str, ComplexMatrix]:
        return {name: np.array(getattr(self, name)) for name in _K_NAMES}

    def with_couplings(self, **ks) -> "PartitionedPlant":
        return replace(self, **ks)

    def validate(self, tol: float = T.VALIDATE_TOL) -> List[Issue]:
        issues = []
        for i in validate(self.to_params(), tol):
            if i.code == "E101_S_NOT_UNITARY":
                i = _issue("ERROR", "E105_S_BLOCKS_NOT_UNITARY", "S_G", i.residual,
                           f"assembled S_G not unitary (residual {i.residual:.3e})")
            issues.append(i)
        return issues


@dataclass(frozen=True)
class BeamsplitterParams:
    S_b: ComplexMatrix

    def __post_init__(self) -> None:
        S_b = alg.as_matrix(self.S_b, name="S_b")
        if S_b.shape[0] != S_b.shape[1]:
            raise ShapeError(f"S_b must be square, got {S_b.shape}")
        object.__setattr__(self, "S_b", alg._frozen(S_b))

    def validate(self, tol: float = T.VALIDATE_TOL) -> List[Issue]:
        r = alg.max_abs(self.S_b @ self.S_b.conj().T - np.eye(self.S_b.shape[0]))
        if r > tol:
            return [_issue("ERROR", "E106_BEAMSPLITTER_NOT_UNITARY", "S_b", r,
                           f"beamsplitter not unitary (residual {r:.3e})")]
        return []


# -----------------------------
# Network reduction
# -----------------------------
def _loop_gain(plant: PartitionedPlant, bs: BeamsplitterParams, sigma_min: float) -> ComplexMatrix:
    """S12 S_b (I − S22 S_b)⁻¹, refusing an ill-posed loop."""
    if bs.S_b.shape != (plant.m2, plant.m2):
        raise ShapeError(f"S_b must be {plant.m2}x{plant.m2}, got {bs.S_b.shape}")
    M = np.eye(plant.m2) - plant.S22 @ bs.S_b
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] < sigma_min:
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        raise IllPosedLoopError(float(sv[-1]), cond)
    return plant.S12 @ bs.S_b @ np.linalg.inv(M)


def _omega_corrections(plant: PartitionedPlant, bs: BeamsplitterParams) -> Tuple[ComplexMatrix, ComplexMatrix]:
    """Raw additive corrections to Ω₋ and Ω₊ (Ω₊ part not yet symmetrized)."""
    if plant.m1 != plant.m2:
        raise ShapeError(f"the Hamiltonian correction needs m1 = m2, got m1={plant.m1}, m2={plant.m2}")
    Sb = bs.S_b
    k11, k12, k21, k22 = plant.k11, plant.k12, plant.k21, plant.k22
    X = k11.conj().T @ Sb @ k21
    corr_minus = -1j * (X - k21.conj().T @ Sb.conj().T @ k11)
    corr_plus = -1j * (k11.conj().T @ Sb @ k22 - k21.conj().T @ Sb.conj().T @ k12)
    return corr_minus, corr_plus


def reduce_network(plant: PartitionedPlant, bs: BeamsplitterParams,
                   tol_profile: ToleranceProfile = DEFAULT_PROFILES["default"]) -> SystemParams:
    """Close channel group 2 through the beamsplitter; returns the m1-channel system."""
    issues = plant.validate(tol_profile.validate_tol) + bs.validate(tol_profile.validate_tol)
    errors = [i for i in issues if i.level == "ERROR"]
    if errors:
        raise InvalidParamsError(errors)
    G = _loop_gain(plant, bs, tol_profile.loop_sigma_min)
    S_red = plant.S11 + G @ plant.S21
    C_minus = plant.k11 + G @ plant.k21
    C_plus = plant.k12 + G @ plant.k22
    corr_minus, corr_plus = _omega_corrections(plant, bs)
    Om = plant.Omega_minus + corr_minus
    Op = plant.Omega_plus + corr_plus

    herm = alg.max_abs(Om - Om.conj().T)
    if herm > tol_profile.symmetrize_tol:
        raise ConventionMismatchError(f"reduced Omega_minus is not Hermitian (defect {herm:.3e})")
    Om = (Om + Om.conj().T) / 2

    anti = alg.max_abs(Op - Op.T)
    if anti > tol_profile.symmetrize_tol:
        raise ConventionMismatchError(f"reduced Omega_plus is not symmetric (defect {anti:.3e})")
    Op = (Op + Op.T) / 2

    reduced = SystemParams(S=S_red, C_minus=C_minus, C_plus=C_plus, Omega_minus=Om, Omega_plus=Op)
    bad = [i for i in validate(reduced, tol_profile.validate_tol) if i.level == "ERROR"]
    if bad:
        raise InvalidParamsError(bad)
    return reduced


# -----------------------------
# Coupling search
# -----------------------------
def _objective_terms(plant: PartitionedPlant, G: ComplexMatrix,
                     bs: BeamsplitterParams) -> Tuple[np.ndarray, np.ndarray, ComplexMatrix, ComplexMatrix]:
    corr_minus, corr_plus = _omega_corrections(plant, bs)
    re_minus = (plant.Omega_minus + corr_minus).real
    Op = plant.Omega_plus + corr_plus
    re_plus = ((Op + Op.T) / 2).real
    anti = Op - Op.T
    C_bar = np.hstack([plant.k11 + G @ plant.k21, plant.k12 + G @ plant.k22])
    return re_minus, re_plus, anti, C_bar


def coupling_objective(plant: PartitionedPlant, bs: BeamsplitterParams,
                       sigma_min: float = T.LOOP_SIGMA_MIN) -> float:
    """‖Re Ω̄₋‖² + ‖Re Ω̄₊‖² + ‖Ω̄₊ - Ω̄₊ᵀ‖² + min(‖Im C̄‖², ‖Re C̄‖²)."""
    G = _loop_gain(plant, bs, sigma_min)
    re_minus, re_plus, anti, C_bar = _objective_terms(plant, G, bs)
    base = float(np.sum(re_minus ** 2) + np.sum(re_plus ** 2) + np.sum(np.abs(anti) ** 2))
    return base + float(min(np.sum(C_bar.imag ** 2), np.sum(C_bar.real ** 2)))


@dataclass(frozen=True)
class CouplingSet:
    k11: ComplexMatrix
    k12: ComplexMatrix
    k21: ComplexMatrix
    k22: ComplexMatrix
    objective: float
    restarts: int
    branch: str  # "real" | "imaginary" | "template"

    def apply(self, plant: PartitionedPlant) -> PartitionedPlant:
        return plant.with_couplings(k11=self.k11, k12=self.k12, k21=self.k21, k22=self.k22)


def search_couplings(plant_template: PartitionedPlant, bs: BeamsplitterParams, budget: int = 20,
                     seed: int = 0, free: Sequence[str] = _K_NAMES,
                     tol_profile: ToleranceProfile = DEFAULT_PROFILES["default"],
                     target: float = 1e-10) -> Optional[CouplingSet]:
    """Multi-start least squares over the free couplings; None when no restart reaches `target`."""
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    unknown = sorted(set(free) - set(_K_NAMES))
    if unknown:
        raise ValueError(f"unknown coupling names {unknown}; choose from {_K_NAMES}")
    free = tuple(k for k in _K_NAMES if k in set(free))
    G = _loop_gain(plant_template, bs, tol_profile.loop_sigma_min)

    start = coupling_objective(plant_template, bs, tol_profile.loop_sigma_min)
    if start < target:
        ks = plant_template.couplings()
        return CouplingSet(objective=start, restarts=0, branch="template", **ks)
    if not free:
        return None

    shapes = [getattr(plant_template, k).shape for k in free]
    sizes = [int(np.prod(s)) for s in shapes]

    def unpack(x: np.ndarray) -> PartitionedPlant:
        ks, off = {}, 0
        for name, shape, size in zip(free, shapes, sizes):
            ks[name] = (x[off:off + size] + 1j * x[off + size:off + 2 * size]).reshape(shape)
            off += 2 * size
        return plant_template.with_couplings(**ks)

    def residuals(x: np.ndarray, branch: str) -> np.ndarray:
        re_minus, re_plus, anti, C_bar = _objective_terms(unpack(x), G, bs)
        c_part = C_bar.imag if branch == "real" else C_bar.real
        return np.concatenate([re_minus.ravel(), re_plus.ravel(), anti.real.ravel(), anti.imag.ravel(), c_part.ravel()])

    rng = np.random.default_rng(seed)
    dim = 2 * sum(sizes)
    for restart in range(1, budget + 1):
        x0 = rng.standard_normal(dim)
        for branch in ("real", "imaginary"):
            sol = least_squares(residuals, x0, args=(branch,), method="trf", max_nfev=100 * dim)
            candidate = unpack(sol.x)
            obj = coupling_objective(candidate, bs, tol_profile.loop_sigma_min)
            if obj < target:
                log.info("coupling search converged on restart %d (%s branch, objective %.3e)", restart, branch, obj)
                return CouplingSet(objective=obj, restarts=restart, branch=branch, **candidate.couplings())
    log.warning("coupling search exhausted %d restarts without reaching %.1e", budget, target)
    return None


# -----------------------------
# Feedback BAE verdict
# -----------------------------
@dataclass(frozen=True)
class FeedbackReport:
    reduced: SystemParams
    bae: bae.BAEReport
    qnd_variables: Tuple[qnd.QNDVariableReport, ...]
    omega_re_residual: float
    coupling_class: T.StructureClass
    verdict: bool


def verify_feedback_bae(plant: PartitionedPlant, bs: BeamsplitterParams,
                        tol_profile: ToleranceProfile = DEFAULT_PROFILES["default"]) -> FeedbackReport:
    """Reduce, then require Ω̄ purely imaginary, C̄ real or imaginary, and confirmed bilateral certificates."""
    reduced = reduce_network(plant, bs, tol_profile)
    report = bae.analyze(reduced, tol_profile)
    omega_re = alg.max_abs(np.hstack([reduced.Omega_minus, reduced.Omega_plus]).real)
    prof = report.profile
    bilateral = any(p.rule_id.startswith("bilateral-") for p in report.predictions)
    verdict = (
        prof.omega_class.is_imaginary
        and (prof.c_class.is_real or prof.c_class.is_imaginary)
        and bilateral
        and report.confirmed
    )
    real = quadrature_realization(reduced, tol=tol_profile.validate_tol)
    variables = tuple(qnd.qnd_scan(real, tol_profile.rank_tol, tol_profile.certify_tol))
    return FeedbackReport(
        reduced=reduced,
        bae=report,
        qnd_variables=variables,
        omega_re_residual=omega_re,
        coupling_class=prof.c_class,
        verdict=verdict,
    )


# -----------------------------
# Optomechanical direct coupling
# -----------------------------
OPTOMECH_LABELS = ("q1", "p1", "q2", "p2", "q3", "p3")


@dataclass(frozen=True)
class OptomechParams:
    """Two cavity modes coupled through q₃ of a mechanical mode, which alone meets the field."""
    delta1: float
    delta2: float
    omega_m: float
    lambda1: float
    lambda2: float
    kappa: float

    def __post_init__(self) -> None:
        for f in ("delta1", "delta2", "omega_m", "lambda1", "lambda2", "kappa"):
            v = float(getattr(self, f))
            if not np.isfinite(v):
                raise ValueError(f"{f} must be finite, got {v}")
            object.__setattr__(self, f, v)
        if self.kappa <= 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be >= 0")

    @property
    def combination(self) -> np.ndarray:
        """λ₁q₁ + λ₂q₂ in the (q1, p1, q2, p2, q3, p3) ordering."""
        return np.array([self.lambda1, 0.0, self.lambda2, 0.0, 0.0, 0.0])

    @property
    def conjugate_combination(self) -> np.ndarray:
        """λ₁p₁ − λ₂p₂."""
        return np.array([0.0, self.lambda1, 0.0, -self.lambda2, 0.0, 0.0])


def build_optomech(p: OptomechParams) -> QuadratureRealization:
    d1, d2, wm, l1, l2, k = p.delta1, p.delta2, p.omega_m, p.lambda1, p.lambda2, p.kappa
    A = np.array([
        [0.0, -d1, 0.0, 0.0, 0.0, 0.0],
        [d1, 0.0, 0.0, 0.0, -l1, 0.0],
        [0.0, 0.0, 0.0, -d2, 0.0, 0.0],
        [0.0, 0.0, d2, 0.0, -l2, 0.0],
        [0.0, 0.0, 0.0, 0.0, -k / 2, wm],
        [-l1, 0.0, -l2, 0.0, -wm, -k / 2],
    ])
    sk = np.sqrt(k)
    B = np.zeros((6, 2))
    B[4, 0] = -sk
    B[5, 1] = -sk
    C = np.zeros((2, 6))
    C[0, 4] = sk
    C[1, 5] = sk
    return QuadratureRealization(A=A, B=B, C=C, D=np.eye(2), state_labels=OPTOMECH_LABELS)


@dataclass(frozen=True)
class OptomechQNDReport:
    combination: qnd.QNDVariableReport
    controllability_residual: float
    conjugate_pair: Optional[qnd.QNDVariableReport] = None
    individual: Tuple[qnd.QNDVariableReport, ...] = field(default=())

    @property
    def is_qnd(self) -> bool:
        return self.combination.is_qnd


def optomech_qnd_report(p: OptomechParams, tol_profile: ToleranceProfile = DEFAULT_PROFILES["default"]) -> OptomechQNDReport:
    """Is λ₁q₁ + λ₂q₂ uncontrollable yet observable; with the literal ‖cᵀ𝒞_u‖ residual."""
    real = build_optomech(p)
    rank_tol, tol = tol_profile.rank_tol, tol_profile.certify_tol
    c = p.combination
    if not np.any(c):
        raise ValueError("lambda1 and lambda2 cannot both be zero")
    combo = qnd.functional_report(real, c, "lambda1*q1+lambda2*q2", "optomech", rank_tol, tol)
    Cu = kalman.controllability_matrix(real.A, real.B)
    ctrl_res = float(np.linalg.norm(c @ Cu))

    pair = None
    if abs(p.delta1 + p.delta2) <= tol and abs(p.lambda1 - p.lambda2) <= tol:
        pair = qnd.functional_report(real, p.conjugate_combination, "lambda1*p1-lambda2*p2", "optomech", rank_tol, tol)
    individual = []
    if abs(p.delta1) <= tol and abs(p.delta2) <= tol:
        for j, lab in ((0, "q1"), (2, "q2")):
            e = np.zeros(6)
            e[j] = 1.0
            individual.append(qnd.functional_report(real, e, lab, "optomech", rank_tol, tol))
    return OptomechQNDReport(
        combination=combo,
        controllability_residual=ctrl_res,
        conjugate_pair=pair,
        individual=tuple(individual),
    )
