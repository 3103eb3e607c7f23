"""Dense complex matrix kernel: doubled-up form, ♭/♯ adjoints, quadrature transform."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import types as T
from .core import ShapeError
from .types import ComplexMatrix, StructureClass


def as_matrix(x, *, rows: Optional[int] = None, cols: Optional[int] = None, name: str = "matrix") -> ComplexMatrix:
    """Coerce to a 2-D complex128 array, optionally checking the shape."""
    out = np.array(x, dtype=np.complex128)
    if out.ndim == 0:
        out = out.reshape(1, 1)
    elif out.ndim == 1:
        out = out.reshape(1, -1)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {out.ndim}-D")
    if rows is not None and out.shape[0] != rows:
        raise ShapeError(f"{name} must have {rows} rows, got {out.shape[0]}")
    if cols is not None and out.shape[1] != cols:
        raise ShapeError(f"{name} must have {cols} columns, got {out.shape[1]}")
    return out


def _frozen(x: np.ndarray) -> np.ndarray:
    y = np.array(x, copy=True)
    y.setflags(write=False)
    return y


def allclose(a, b, atol: float = T.ATOL, rtol: float = T.RTOL) -> bool:
    """|a - b| <= atol + rtol * max(|a|, |b|), entrywise."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    return bool(np.all(np.abs(a - b) <= atol + rtol * np.maximum(np.abs(a), np.abs(b))))


def max_abs(x) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0


# -----------------------------
# J matrices
# -----------------------------
def j_matrix(k: int) -> np.ndarray:
    """J_k = diag(I_k, -I_k)."""
    return np.diag(np.concatenate([np.ones(k), -np.ones(k)]))


def symplectic_j(k: int) -> np.ndarray:
    """𝕁_k = [[0, I_k], [-I_k, 0]]."""
    eye = np.eye(k)
    zero = np.zeros((k, k))
    return np.block([[zero, eye], [-eye, zero]])


def _half_dims(X: np.ndarray, what: str) -> tuple:
    rows, cols = X.shape
    if rows % 2 or cols % 2:
        raise ShapeError(f"{what} needs even dimensions, got {rows}x{cols}")
    return rows // 2, cols // 2


def flat_adjoint(X) -> ComplexMatrix:
    """X♭ = J_r X† J_k for X of size 2k x 2r."""
    X = as_matrix(X)
    k, r = _half_dims(X, "flat_adjoint")
    return j_matrix(r) @ X.conj().T @ j_matrix(k)


def sharp_adjoint(X) -> np.ndarray:
    """X♯ = -𝕁_r X† 𝕁_k for X of size 2k x 2r. Real input gives real output."""
    Xa = np.asarray(X)
    if Xa.ndim != 2:
        raise ShapeError("sharp_adjoint needs a 2-D matrix")
    k, r = _half_dims(Xa, "sharp_adjoint")
    out = -symplectic_j(r) @ Xa.conj().T @ symplectic_j(k)
    return out


# -----------------------------
# Doubled-up matrices
# -----------------------------
@dataclass(frozen=True)
class DoubledMatrix:
    """Δ(U, V) = [[U, V], [V^#, U^#]], stored through its upper blocks."""
    U: ComplexMatrix
    V: ComplexMatrix

    def __post_init__(self) -> None:
        U = as_matrix(self.U, name="U")
        V = as_matrix(self.V, name="V")
        if U.shape != V.shape:
            raise ShapeError(f"doubled_up needs U and V of the same shape, got {U.shape} and {V.shape}")
        object.__setattr__(self, "U", _frozen(U))
        object.__setattr__(self, "V", _frozen(V))

    @property
    def shape(self) -> tuple:
        k, r = self.U.shape
        return 2 * k, 2 * r

    def full(self) -> ComplexMatrix:
        return np.block([[self.U, self.V], [self.V.conj(), self.U.conj()]])

    def __add__(self, other: "DoubledMatrix") -> "DoubledMatrix":
        return DoubledMatrix(self.U + other.U, self.V + other.V)

    def __matmul__(self, other: "DoubledMatrix") -> "DoubledMatrix":
        U1, V1, U2, V2 = self.U, self.V, other.U, other.V
        return DoubledMatrix(U1 @ U2 + V1 @ V2.conj(), U1 @ V2 + V1 @ U2.conj())

    def flat(self) -> "DoubledMatrix":
        """Δ(U, V)♭ = Δ(U†, -Vᵀ)."""
        return DoubledMatrix(self.U.conj().T, -self.V.T)


def doubled_up(U, V) -> DoubledMatrix:
    return DoubledMatrix(U, V)


def is_doubled_up(X) -> bool:
    """Exact structural check: lower half equals the conjugated, swapped upper half."""
    X = as_matrix(X)
    k, r = _half_dims(X, "is_doubled_up")
    return bool(
        np.array_equal(X[k:, :r], X[:k, r:].conj()) and np.array_equal(X[k:, r:], X[:k, :r].conj())
    )


def doubled_parts(X) -> DoubledMatrix:
    """Read Δ(U, V) back from its full 2k x 2r form (upper blocks only)."""
    X = as_matrix(X)
    k, r = _half_dims(X, "doubled_parts")
    return DoubledMatrix(X[:k, :r], X[:k, r:])


# -----------------------------
# Quadrature transform
# -----------------------------
def quad_transform(n: int) -> ComplexMatrix:
    """V_n = (1/√2)[[I, I], [-iI, iI]], mapping [a; a^#] to [q; p]."""
    if n < 1:
        raise ShapeError(f"quad_transform needs n >= 1, got {n}")
    eye = np.eye(n, dtype=np.complex128)
    return np.block([[eye, eye], [-1j * eye, 1j * eye]]) / np.sqrt(2.0)


def to_quadrature(X, k: int, r: int) -> ComplexMatrix:
    """V_k X V_r† for X of size 2k x 2r."""
    return quad_transform(k) @ as_matrix(X) @ quad_transform(r).conj().T


def quadrature_blocks(U, V) -> np.ndarray:
    """V_k Δ(U, V) V_r† in closed form: [[Re(U+V), -Im(U-V)], [Im(U+V), Re(U-V)]]."""
    U = as_matrix(U)
    V = as_matrix(V)
    return np.block([
        [(U + V).real, -(U - V).imag],
        [(U + V).imag, (U - V).real],
    ])


# -----------------------------
# Classification
# -----------------------------
def classify(X, tol: float = T.CLASSIFY_TOL) -> StructureClass:
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    X = as_matrix(X)
    bound = tol * (1.0 + max_abs(X))
    real = max_abs(X.imag) <= bound
    imag = max_abs(X.real) <= bound
    if real and imag:
        return StructureClass.Zero
    if real:
        return StructureClass.Real
    if imag:
        return StructureClass.PurelyImaginary
    return StructureClass.Neither


# -----------------------------
# Random matrices
# -----------------------------
def random_complex(rows: int, cols: int, rng: np.random.Generator) -> ComplexMatrix:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def random_unitary(m: int, rng: np.random.Generator) -> ComplexMatrix:
    q, r = np.linalg.qr(random_complex(m, m, rng))
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_hermitian(n: int, rng: np.random.Generator) -> ComplexMatrix:
    g = random_complex(n, n, rng)
    return (g + g.conj().T) / 2


def random_symmetric(n: int, rng: np.random.Generator) -> ComplexMatrix:
    f = random_complex(n, n, rng)
    return (f + f.T) / 2
