# src/lqbae/types.py
from __future__ import annotations

from enum import Enum

import numpy as np
from numpy.typing import NDArray

ComplexMatrix = NDArray[np.complex128]
RealMatrix = NDArray[np.float64]


class QuadBlock(str, Enum):
    """Quadrature block of a channel or mode vector in [q; p] ordering."""
    QuadQ = "q"
    QuadP = "p"

    @classmethod
    def parse(cls, text: str) -> "QuadBlock":
        key = text.strip().lower()
        if key in {"q", "quadq"}:
            return cls.QuadQ
        if key in {"p", "quadp"}:
            return cls.QuadP
        raise ValueError(f"quadrature block must be q or p, got {text!r}")


class StructureClass(str, Enum):
    Real = "Real"
    PurelyImaginary = "PurelyImaginary"
    Zero = "Zero"
    Neither = "Neither"

    @property
    def is_real(self) -> bool:
        return self in (StructureClass.Real, StructureClass.Zero)

    @property
    def is_imaginary(self) -> bool:
        return self in (StructureClass.PurelyImaginary, StructureClass.Zero)


class ReOmegaRelation(str, Enum):
    # Both: Re(Ω₋) = Re(Ω₊) = 0, so equal and opposite at once
    Equal = "Equal"
    Opposite = "Opposite"
    Both = "Both"
    Neither = "Neither"


class CouplingPattern(str, Enum):
    QCoupling = "QCoupling"
    PCoupling = "PCoupling"
    Decoupled = "Decoupled"
    General = "General"


# Defaults of the "default" tolerance profile.
CLASSIFY_TOL = 1e-10
ATOL = 1e-12
RTOL = 1e-9
RANK_TOL = 1e-9
CERTIFY_TOL = 1e-8
VALIDATE_TOL = 1e-9
POLE_MARGIN = 1e-8
LOOP_SIGMA_MIN = 1e-10
SYMMETRIZE_TOL = 1e-8
INJECTION_TOL = 1e-8
REALIZABILITY_TOL = 1e-10
UNCERTAINTY_TOL = 1e-8

LEVELS = ("INFO", "WARN", "ERROR")
