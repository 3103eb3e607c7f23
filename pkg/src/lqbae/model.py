"""System parameters (S, C₋, C₊, Ω₋, Ω₊) and their two state-space realizations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import algebra as alg
from . import types as T
from .core import InternalConsistencyError, InvalidParamsError, Issue, ShapeError, _issue
from .types import ComplexMatrix, QuadBlock, RealMatrix

log = logging.getLogger(__name__)


# -----------------------------
# Parameters
# -----------------------------
@dataclass(frozen=True)
class SystemParams:
    """Physical parameterization of an n-mode, m-channel linear quantum system.

    L = C₋a + C₊a^#, H = ½ ă†Ωă with Ω = Δ(Ω₋, Ω₊). Arrays are stored
    read-only; shapes are checked at construction.
    """
    S: ComplexMatrix
    C_minus: ComplexMatrix
    C_plus: ComplexMatrix
    Omega_minus: ComplexMatrix
    Omega_plus: ComplexMatrix

    def __post_init__(self) -> None:
        for name in ("S", "C_minus", "C_plus", "Omega_minus", "Omega_plus"):
            object.__setattr__(self, name, alg._frozen(alg.as_matrix(getattr(self, name), name=name)))
        m = self.S.shape[0]
        n = self.Omega_minus.shape[0]
        expected = {
            "S": (m, m),
            "C_minus": (m, n),
            "C_plus": (m, n),
            "Omega_minus": (n, n),
            "Omega_plus": (n, n),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"{name} has shape {got}, expected {shape} for n={n}, m={m}")

    @property
    def n(self) -> int:
        return self.Omega_minus.shape[0]

    @property
    def m(self) -> int:
        return self.S.shape[0]

    @classmethod
    def build(
        cls,
        n: int,
        m: int,
        S=None,
        C_minus=None,
        C_plus=None,
        Omega_minus=None,
        Omega_plus=None,
    ) -> "SystemParams":
        """Fill omitted fields with S = I and zero couplings / Hamiltonian blocks."""
        if n < 1 or m < 1:
            raise ShapeError(f"n and m must be >= 1, got n={n}, m={m}")
        return cls(
            S=np.eye(m) if S is None else S,
            C_minus=np.zeros((m, n)) if C_minus is None else alg.as_matrix(C_minus, rows=m, cols=n, name="C_minus"),
            C_plus=np.zeros((m, n)) if C_plus is None else alg.as_matrix(C_plus, rows=m, cols=n, name="C_plus"),
            Omega_minus=np.zeros((n, n)) if Omega_minus is None else Omega_minus,
            Omega_plus=np.zeros((n, n)) if Omega_plus is None else Omega_plus,
        )

    @property
    def coupling(self) -> alg.DoubledMatrix:
        return alg.doubled_up(self.C_minus, self.C_plus)

    @property
    def hamiltonian(self) -> alg.DoubledMatrix:
        return alg.doubled_up(self.Omega_minus, self.Omega_plus)


def validate(params: SystemParams, tol: float = T.VALIDATE_TOL) -> List[Issue]:
    """Check the physical invariants; an empty list means the parameters are valid."""
    issues: List[Issue] = []
    for name in ("S", "C_minus", "C_plus", "Omega_minus", "Omega_plus"):
        if not np.all(np.isfinite(getattr(params, name))):
            issues.append(_issue("ERROR", "E104_NONFINITE_ENTRY", name, float("inf"), f"{name} has non-finite entries"))
    if issues:
        return issues

    S = params.S
    r = alg.max_abs(S @ S.conj().T - np.eye(params.m))
    if r > tol:
        issues.append(_issue("ERROR", "E101_S_NOT_UNITARY", "S", r, f"S not unitary (residual {r:.3e})"))

    Om = params.Omega_minus
    r = alg.max_abs(Om - Om.conj().T)
    if r > tol * (1.0 + alg.max_abs(Om)):
        issues.append(_issue("ERROR", "E102_OMEGA_MINUS_NOT_HERMITIAN", "Omega_minus", r,
                             f"Omega_minus not Hermitian (residual {r:.3e})"))

    Op = params.Omega_plus
    r = alg.max_abs(Op - Op.T)
    if r > tol * (1.0 + alg.max_abs(Op)):
        issues.append(_issue("ERROR", "E103_OMEGA_PLUS_NOT_SYMMETRIC", "Omega_plus", r,
                             f"Omega_plus not symmetric (residual {r:.3e})"))

    if not issues:
        ann = annihilation_realization(params, check=False)
        r = ann.realizability_residual()
        scale = 1.0 + alg.max_abs(ann.A_cal) + alg.max_abs(ann.B_cal) ** 2
        if r > T.REALIZABILITY_TOL * scale:
            issues.append(_issue("WARN", "W201_REALIZABILITY_RESIDUAL", "realization", r,
                                 f"A + A♭ + BB♭ residual {r:.3e}"))
    return issues


def _require_valid(params: SystemParams, tol: float) -> None:
    bad = [i for i in validate(params, tol) if i.level == "ERROR"]
    if bad:
        raise InvalidParamsError(bad)


# -----------------------------
# Annihilation-creation form
# -----------------------------
@dataclass(frozen=True)
class AnnihilationRealization:
    A_cal: ComplexMatrix
    B_cal: ComplexMatrix
    C_cal: ComplexMatrix
    D_cal: ComplexMatrix

    @property
    def n(self) -> int:
        return self.A_cal.shape[0] // 2

    @property
    def m(self) -> int:
        return self.D_cal.shape[0] // 2

    def realizability_residual(self) -> float:
        """max |𝒜 + 𝒜♭ + ℬℬ♭|."""
        A, B = self.A_cal, self.B_cal
        return alg.max_abs(A + alg.flat_adjoint(A) + B @ alg.flat_adjoint(B))

    def is_doubled_up(self) -> bool:
        return all(alg.is_doubled_up(X) for X in (self.A_cal, self.B_cal, self.C_cal, self.D_cal))


def annihilation_realization(params: SystemParams, *, check: bool = True,
                             tol: float = T.VALIDATE_TOL) -> AnnihilationRealization:
    """𝒞 = Δ(C₋,C₊), 𝒟 = Δ(S,0), ℬ = −𝒞♭𝒟, 𝒜 = −iJΩ − ½𝒞♭𝒞."""
    if check:
        _require_valid(params, tol)
    C = params.coupling
    D = alg.doubled_up(params.S, np.zeros_like(params.S))
    Cf = C.flat()
    B = Cf @ D
    CfC = Cf @ C
    # −iJ_nΔ(Ω₋,Ω₊) = Δ(−iΩ₋, −iΩ₊)
    A = alg.doubled_up(-1j * params.Omega_minus - 0.5 * CfC.U, -1j * params.Omega_plus - 0.5 * CfC.V)
    return AnnihilationRealization(
        A_cal=alg._frozen(A.full()),
        B_cal=alg._frozen(-B.full()),
        C_cal=alg._frozen(C.full()),
        D_cal=alg._frozen(D.full()),
    )


# -----------------------------
# Quadrature form
# -----------------------------
def default_state_labels(n: int) -> Tuple[str, ...]:
    return tuple(f"q{j}" for j in range(1, n + 1)) + tuple(f"p{j}" for j in range(1, n + 1))


def channel_slice(block: QuadBlock, m: int) -> slice:
    """Rows (outputs) or columns (inputs) of a quadrature block; channels are always [q; p]."""
    return slice(0, m) if QuadBlock(block) is QuadBlock.QuadQ else slice(m, 2 * m)


@dataclass(frozen=True)
class QuadratureRealization:
    """Real (𝔸, 𝔹, ℂ, 𝔻). Inputs and outputs are ordered [q; p] per channel block.

    The state ordering follows `state_labels`; labels pair qK with pK, which
    defines the commutation matrix used by the realizability check.
    """
    A: RealMatrix
    B: RealMatrix
    C: RealMatrix
    D: RealMatrix
    state_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        mats = {}
        for name in ("A", "B", "C", "D"):
            X = np.asarray(getattr(self, name))
            if np.iscomplexobj(X):
                if alg.max_abs(X.imag) > 1e-10 * (1.0 + alg.max_abs(X)):
                    raise ShapeError(f"quadrature matrix {name} has non-negligible imaginary part")
                X = X.real
            mats[name] = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A, B, C, D = mats["A"], mats["B"], mats["C"], mats["D"]
        N = A.shape[0]
        if A.shape != (N, N) or N % 2:
            raise ShapeError(f"A must be square with even size, got {A.shape}")
        M = D.shape[0]
        if D.shape != (M, M) or M % 2:
            raise ShapeError(f"D must be square with even size, got {D.shape}")
        if B.shape != (N, M):
            raise ShapeError(f"B has shape {B.shape}, expected {(N, M)}")
        if C.shape != (M, N):
            raise ShapeError(f"C has shape {C.shape}, expected {(M, N)}")
        for name, X in mats.items():
            object.__setattr__(self, name, alg._frozen(X))
        labels = tuple(self.state_labels) or default_state_labels(N // 2)
        if len(labels) != N or len(set(labels)) != N:
            raise ShapeError(f"state_labels must be {N} distinct names, got {labels}")
        object.__setattr__(self, "state_labels", labels)
        self._pairs()  # validates the labels

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    @property
    def m(self) -> int:
        return self.D.shape[0] // 2

    def _pairs(self) -> List[Tuple[int, int]]:
        index = {lab: i for i, lab in enumerate(self.state_labels)}
        pairs = []
        for lab, i in index.items():
            if lab[0] != "q":
                continue
            partner = "p" + lab[1:]
            if partner not in index:
                raise ShapeError(f"state label {lab} has no conjugate {partner}")
            pairs.append((i, index[partner]))
        if 2 * len(pairs) != len(index):
            raise ShapeError("state labels must come in qK/pK pairs")
        return pairs

    def state_indices(self, block: QuadBlock) -> List[int]:
        prefix = QuadBlock(block).value
        return [i for i, lab in enumerate(self.state_labels) if lab.startswith(prefix)]

    def commutation_matrix(self) -> RealMatrix:
        """𝕁 in the realization's own state ordering."""
        Jn = np.zeros_like(self.A)
        for iq, ip in self._pairs():
            Jn[iq, ip] = 1.0
            Jn[ip, iq] = -1.0
        return Jn

    def realizability_residual(self) -> float:
        """max |𝔸𝕁 + 𝕁𝔸ᵀ + 𝔹𝕁𝔹ᵀ|."""
        Jn = self.commutation_matrix()
        Jm = alg.symplectic_j(self.m)
        return alg.max_abs(self.A @ Jn + Jn @ self.A.T + self.B @ Jm @ self.B.T)

    def output_rows(self, block: QuadBlock) -> slice:
        return channel_slice(block, self.m)

    def input_cols(self, block: QuadBlock) -> slice:
        return channel_slice(block, self.m)


def quadrature_realization(params: SystemParams, *, check: bool = True,
                           tol: float = T.VALIDATE_TOL) -> QuadratureRealization:
    """Closed block formulas, self-checked against V(·)V† of the annihilation form."""
    if check:
        _require_valid(params, tol)
    n, m = params.n, params.m
    D = alg.quadrature_blocks(params.S, np.zeros_like(params.S))
    C = alg.quadrature_blocks(params.C_minus, params.C_plus)
    C_sharp = alg.sharp_adjoint(C)
    JH = alg.quadrature_blocks(-1j * params.Omega_minus, -1j * params.Omega_plus)
    B = -C_sharp @ D
    A = JH - 0.5 * C_sharp @ C

    ann = annihilation_realization(params, check=False)
    for name, blk, X, k, r in (
        ("A", A, ann.A_cal, n, n),
        ("B", B, ann.B_cal, n, m),
        ("C", C, ann.C_cal, m, n),
        ("D", D, ann.D_cal, m, m),
    ):
        conj = alg.to_quadrature(X, k, r)
        bound = 1e-10 * (1.0 + alg.max_abs(blk))
        if alg.max_abs(conj.imag) > bound or alg.max_abs(conj.real - blk) > bound:
            raise InternalConsistencyError(
                f"quadrature {name}: block formula and V-conjugation disagree "
                f"(diff {alg.max_abs(conj - blk):.3e})"
            )
    log.debug("quadrature realization n=%d m=%d built and cross-checked", n, m)
    return QuadratureRealization(A=A, B=B, C=C, D=D)


def coupling_rows(params: SystemParams) -> Tuple[ComplexMatrix, ComplexMatrix]:
    """(Λ_q, Λ_p) with L = Λ_q q + Λ_p p."""
    s = 1.0 / np.sqrt(2.0)
    return s * (params.C_minus + params.C_plus), 1j * s * (params.C_minus - params.C_plus)


def random_params(n: int, m: int, rng: np.random.Generator) -> SystemParams:
    return SystemParams(
        S=alg.random_unitary(m, rng),
        C_minus=alg.random_complex(m, n, rng),
        C_plus=alg.random_complex(m, n, rng),
        Omega_minus=alg.random_hermitian(n, rng),
        Omega_plus=alg.random_symmetric(n, rng),
    )


def restrict_channels(params: SystemParams, channels: Sequence[int]) -> SystemParams:
    """Keep a subset of channels (S restricted to the same rows and columns)."""
    idx = list(channels)
    return SystemParams(
        S=params.S[np.ix_(idx, idx)],
        C_minus=params.C_minus[idx],
        C_plus=params.C_plus[idx],
        Omega_minus=params.Omega_minus,
        Omega_plus=params.Omega_plus,
    )


def realization_from_matrices(A, B, C, D, state_labels: Optional[Sequence[str]] = None) -> QuadratureRealization:
    return QuadratureRealization(A=A, B=B, C=C, D=D, state_labels=tuple(state_labels or ()))
