"""Transfer matrices, Markov parameters and zero-block certificates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from . import algebra as alg
from . import types as T
from .core import HypothesisError, InternalConsistencyError, PoleError, ShapeError
from .model import AnnihilationRealization, QuadratureRealization, SystemParams
from .types import ComplexMatrix, QuadBlock

log = logging.getLogger(__name__)

_CROSS_CHECK_POINTS = 5


@dataclass(frozen=True)
class BlockSelector:
    """Which block of G[s]: output quadrature `output_block` driven by input `input_block`."""
    output_block: QuadBlock
    input_block: QuadBlock

    def __post_init__(self) -> None:
        object.__setattr__(self, "output_block", QuadBlock(self.output_block))
        object.__setattr__(self, "input_block", QuadBlock(self.input_block))

    @property
    def label(self) -> str:
        return f"{self.output_block.value}_out<-{self.input_block.value}_in"

    @property
    def is_cross(self) -> bool:
        return self.output_block is not self.input_block

    @classmethod
    def parse(cls, out: str, inp: str) -> "BlockSelector":
        return cls(QuadBlock.parse(out), QuadBlock.parse(inp))


ALL_SELECTORS: Tuple[BlockSelector, ...] = tuple(
    BlockSelector(o, i) for o in (QuadBlock.QuadQ, QuadBlock.QuadP) for i in (QuadBlock.QuadQ, QuadBlock.QuadP)
)


@dataclass(frozen=True)
class ZeroBlockCertificate:
    """Markov-parameter evidence that a block of G[s] vanishes identically.

    `markov_residuals[k]` is max|ℂ_blk 𝔸^k 𝔹_blk|; each is compared against
    tol·max(1, ‖ℂ_blk‖‖𝔸‖^k‖𝔹_blk‖). The verdict also requires the 𝔻 block
    to vanish. `cross_check_residual` is the largest block entry seen at the
    sampled points s; a zero verdict the samples contradict raises
    InternalConsistencyError.
    """
    selector: BlockSelector
    horizon: int
    max_residual: float
    verdict: bool
    feedthrough_residual: float = 0.0
    markov_residuals: Tuple[float, ...] = ()
    tolerance: float = T.CERTIFY_TOL
    cross_check_residual: float = 0.0


@dataclass(frozen=True)
class RationalScalar:
    """num(s)/den(s), coefficients highest degree first."""
    numerator: Tuple[float, ...]
    denominator: Tuple[float, ...]

    def __post_init__(self) -> None:
        num = tuple(float(c) for c in self.numerator)
        den = tuple(float(c) for c in self.denominator)
        if not den or den[0] == 0.0:
            raise ValueError("denominator must have a nonzero leading coefficient")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    def __call__(self, s: complex) -> complex:
        return complex(np.polyval(self.numerator, s) / np.polyval(self.denominator, s))

    def __str__(self) -> str:
        return f"({_poly_str(self.numerator)})/({_poly_str(self.denominator)})"


def _poly_str(coeffs: Tuple[float, ...]) -> str:
    deg = len(coeffs) - 1
    terms = []
    for k, c in enumerate(coeffs):
        p = deg - k
        if c == 0.0 and deg > 0:
            continue
        var = "" if p == 0 else ("s" if p == 1 else f"s^{p}")
        if var and c == 1.0:
            terms.append(var)
        else:
            terms.append(f"{c:g}{'*' + var if var else ''}")
    return " + ".join(terms).replace("+ -", "- ") or "0"


# -----------------------------
# Evaluation
# -----------------------------
def _check_pole(A: np.ndarray, s: complex, pole_margin: float) -> None:
    eig = np.linalg.eigvals(A)
    if eig.size == 0:
        return
    j = int(np.argmin(np.abs(eig - s)))
    if abs(eig[j] - s) <= pole_margin:
        raise PoleError(s, complex(eig[j]))


def evaluate(real: QuadratureRealization, s: complex, pole_margin: float = T.POLE_MARGIN) -> ComplexMatrix:
    """G[s] = 𝔻 + ℂ(sI − 𝔸)⁻¹𝔹."""
    _check_pole(real.A, s, pole_margin)
    N = real.A.shape[0]
    return real.D + real.C @ np.linalg.solve(s * np.eye(N) - real.A, real.B)


def evaluate_annihilation(ann: AnnihilationRealization, s: complex,
                          pole_margin: float = T.POLE_MARGIN) -> ComplexMatrix:
    """G_ann[s] = 𝒟 + 𝒞(sI − 𝒜)⁻¹ℬ."""
    _check_pole(ann.A_cal, s, pole_margin)
    N = ann.A_cal.shape[0]
    return ann.D_cal + ann.C_cal @ np.linalg.solve(s * np.eye(N) - ann.A_cal, ann.B_cal)


def markov(real: QuadratureRealization, k_max: int) -> List[np.ndarray]:
    """[ℂ𝔹, ℂ𝔸𝔹, …, ℂ𝔸^k_max 𝔹]."""
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    out = []
    X = real.B
    for _ in range(k_max + 1):
        out.append(real.C @ X)
        X = real.A @ X
    return out


def stable_abscissa(A: np.ndarray) -> float:
    eig = np.linalg.eigvals(A)
    return float(max(0.0, np.max(eig.real))) if eig.size else 0.0


# -----------------------------
# Certification
# -----------------------------
def certify_zero_block(real: QuadratureRealization, selector: BlockSelector,
                       tol: float = T.CERTIFY_TOL) -> ZeroBlockCertificate:
    """Certify G_blk[s] ≡ 0 from the 𝔻 block and ℂ_blk𝔸^k𝔹_blk, k < 2n (Cayley–Hamilton)."""
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    rows = real.output_rows(selector.output_block)
    cols = real.input_cols(selector.input_block)
    C_blk = real.C[rows, :]
    B_blk = real.B[:, cols]
    horizon = real.A.shape[0]

    d_res = alg.max_abs(real.D[rows, cols])
    ok = d_res <= tol
    norm_A = float(np.linalg.norm(real.A, 2))
    scale = float(np.linalg.norm(C_blk, 2) * np.linalg.norm(B_blk, 2))
    residuals = []
    X = B_blk
    for k in range(horizon):
        r = alg.max_abs(C_blk @ X)
        residuals.append(r)
        if r > tol * max(1.0, scale * norm_A ** k):
            ok = False
        X = real.A @ X
    max_res = max([d_res] + residuals)

    # independent check on sampled points right of every pole
    rng = np.random.default_rng(0)
    a = stable_abscissa(real.A)
    samples = a + 1.0 + rng.random(_CROSS_CHECK_POINTS) + 1j * rng.random(_CROSS_CHECK_POINTS)
    cross = 0.0
    g_scale = 0.0
    for s in samples:
        G = evaluate(real, complex(s))
        cross = max(cross, alg.max_abs(G[rows, cols]))
        g_scale = max(g_scale, alg.max_abs(G))
    cross_zero = cross <= max(1e3 * tol, 1e-6) * (1.0 + g_scale)
    if ok and not cross_zero:
        raise InternalConsistencyError(
            f"certificate {selector.label}: Markov verdict zero but sampled block reaches {cross:.3e}"
        )
    log.debug("certificate %s: verdict %s, max residual %.3e", selector.label, ok, max_res)

    return ZeroBlockCertificate(
        selector=selector,
        horizon=horizon,
        max_residual=max_res,
        verdict=ok,
        feedthrough_residual=d_res,
        markov_residuals=tuple(residuals),
        tolerance=tol,
        cross_check_residual=cross,
    )


# -----------------------------
# Closed forms
# -----------------------------
def siso_closed_form(params: SystemParams, which: QuadBlock = QuadBlock.QuadQ,
                     tol: float = T.CERTIFY_TOL) -> RationalScalar:
    """G_qq (or G_pp) = (s − g/2)/(s + g/2) for one channel with unit scattering.

    Requires [L + L*, H] = 0 for the q block, [L − L*, H] = 0 for the p block.
    """
    from . import qnd

    if params.m != 1:
        raise ShapeError(f"siso_closed_form needs m = 1, got m = {params.m}")
    s_res = abs(complex(params.S[0, 0]) - 1.0)
    if s_res > tol:
        raise HypothesisError("S = 1", s_res)
    which = QuadBlock(which)
    if which is QuadBlock.QuadQ:
        coeffs, label = qnd.commutator_quadrature_sum(params), "[L + L*, H] = 0"
    else:
        coeffs, label = qnd.commutator_quadrature_difference(params), "[L - L*, H] = 0"
    bound = tol * (1.0 + alg.max_abs(params.coupling.full()) * alg.max_abs(params.hamiltonian.full()))
    if coeffs.residual > bound:
        raise HypothesisError(label, coeffs.residual)
    g = qnd.siso_g(params)
    return RationalScalar((1.0, -g / 2.0), (1.0, g / 2.0))


@dataclass(frozen=True)
class DiagonalTransferBlocks:
    """G_ann[s] = diag(G₁[s], G₂[s]) with G₁[s] = (sI − ½K)(sI + ½K)⁻¹S, G₂ its conjugate."""
    K: ComplexMatrix
    S: ComplexMatrix
    case: int
    case_label: str = field(default="")

    def upper(self, s: complex) -> ComplexMatrix:
        m = self.K.shape[0]
        eye = np.eye(m)
        return (s * eye - 0.5 * self.K) @ np.linalg.solve(s * eye + 0.5 * self.K, self.S)

    def lower(self, s: complex) -> ComplexMatrix:
        return np.conj(self.upper(np.conj(s)))

    def annihilation(self, s: complex) -> ComplexMatrix:
        m = self.K.shape[0]
        Z = np.zeros((m, m), dtype=np.complex128)
        return np.block([[self.upper(s), Z], [Z, self.lower(s)]])

    def quadrature(self, s: complex) -> ComplexMatrix:
        V = alg.quad_transform(self.K.shape[0])
        return V @ self.annihilation(s) @ V.conj().T


_CASES = {
    1: "C_plus = 0",
    2: "C_minus = 0",
    3: "Omega_plus = 0 and C_minus C_plus^T symmetric",
    4: "Omega_minus = 0 and C_minus C_plus^T symmetric",
}


def blockdiag_closed_form(params: SystemParams, case: int, tol: float = T.CERTIFY_TOL) -> DiagonalTransferBlocks:
    """Closed-form diagonal blocks of G_ann[s] under [L, H] = 0.

    The four cases are specialisations of one condition: [L, H] = 0 with
    C₋C₊ᵀ symmetric, which gives K = C₋C₋† − C₊C₊†.
    """
    from . import qnd

    if case not in _CASES:
        raise ValueError(f"case must be 1..4, got {case}")
    scale = 1.0 + alg.max_abs(params.coupling.full()) + alg.max_abs(params.hamiltonian.full())
    case_res = {
        1: alg.max_abs(params.C_plus),
        2: alg.max_abs(params.C_minus),
        3: alg.max_abs(params.Omega_plus),
        4: alg.max_abs(params.Omega_minus),
    }[case]
    if case_res > tol * scale:
        raise HypothesisError(_CASES[case], case_res)
    comm = qnd.is_commuting(params, tol)
    if not comm.holds:
        raise HypothesisError("C_minus C_plus^T symmetric", comm.residual)
    lh = qnd.commutator_LH(params)
    if lh.residual > tol * scale ** 2:
        raise HypothesisError("[L, H] = 0", lh.residual)
    Cm, Cp = params.C_minus, params.C_plus
    K = Cm @ Cm.conj().T - Cp @ Cp.conj().T
    return DiagonalTransferBlocks(K=K, S=np.array(params.S), case=case, case_label=_CASES[case])
