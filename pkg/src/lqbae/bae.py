"""Structural BAE classification: profile -> predicted zero blocks -> certificates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import algebra as alg
from . import kalman
from . import types as T
from .core import InternalConsistencyError
from .model import QuadratureRealization, SystemParams, quadrature_realization
from .profiles import DEFAULT_PROFILES, ToleranceProfile
from .transfer import BlockSelector, ZeroBlockCertificate, certify_zero_block
from .types import CouplingPattern, QuadBlock, ReOmegaRelation, StructureClass

log = logging.getLogger(__name__)

Q, P = QuadBlock.QuadQ, QuadBlock.QuadP


@dataclass(frozen=True)
class StructureProfile:
    s_class: StructureClass
    c_class: StructureClass
    omega_class: StructureClass
    re_omega_relation: ReOmegaRelation
    coupling_pattern: CouplingPattern
    tol: float = T.CLASSIFY_TOL


def _close(a, b, tol: float) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return alg.max_abs(a - b) <= tol * (1.0 + max(alg.max_abs(a), alg.max_abs(b)))


def profile(params: SystemParams, tol: float = T.CLASSIFY_TOL) -> StructureProfile:
    re_m, re_p = params.Omega_minus.real, params.Omega_plus.real
    equal, opposite = _close(re_m, re_p, tol), _close(re_m, -re_p, tol)
    if equal and opposite:
        rel = ReOmegaRelation.Both
    elif equal:
        rel = ReOmegaRelation.Equal
    elif opposite:
        rel = ReOmegaRelation.Opposite
    else:
        rel = ReOmegaRelation.Neither

    Cm, Cp = params.C_minus, params.C_plus
    q_pat, p_pat = _close(Cm, Cp, tol), _close(Cm, -Cp, tol)
    if q_pat and p_pat:
        pattern = CouplingPattern.Decoupled
    elif q_pat:
        pattern = CouplingPattern.QCoupling
    elif p_pat:
        pattern = CouplingPattern.PCoupling
    else:
        pattern = CouplingPattern.General

    return StructureProfile(
        s_class=alg.classify(params.S, tol),
        c_class=alg.classify(np.hstack([Cm, Cp]), tol),
        omega_class=alg.classify(np.hstack([params.Omega_minus, params.Omega_plus]), tol),
        re_omega_relation=rel,
        coupling_pattern=pattern,
        tol=tol,
    )


# -----------------------------
# Rule table
# -----------------------------
@dataclass(frozen=True)
class Rule:
    rule_id: str
    hypothesis: str
    selectors: Callable[[StructureProfile], Tuple[BlockSelector, ...]]


def _pure(c: StructureClass) -> bool:
    return c.is_real or c.is_imaginary


def _bilateral_real(p: StructureProfile) -> Tuple[BlockSelector, ...]:
    if p.s_class.is_real and p.omega_class.is_imaginary and _pure(p.c_class):
        return (BlockSelector(Q, P), BlockSelector(P, Q))
    return ()


def _bilateral_imag(p: StructureProfile) -> Tuple[BlockSelector, ...]:
    if p.s_class.is_imaginary and p.omega_class.is_imaginary and _pure(p.c_class):
        return (BlockSelector(Q, Q), BlockSelector(P, P))
    return ()


# (S real?, C real?) -> selector, one table per Re Ω relation
_EQUAL_TABLE = {
    (True, True): BlockSelector(Q, P),
    (True, False): BlockSelector(P, Q),
    (False, True): BlockSelector(Q, Q),
    (False, False): BlockSelector(P, P),
}
_OPPOSITE_TABLE = {
    (True, True): BlockSelector(P, Q),
    (True, False): BlockSelector(Q, P),
    (False, True): BlockSelector(P, P),
    (False, False): BlockSelector(Q, Q),
}


def _table_rows(p: StructureProfile, table: Dict[Tuple[bool, bool], BlockSelector]) -> Tuple[BlockSelector, ...]:
    out = []
    for s_real in (True, False):
        if not (p.s_class.is_real if s_real else p.s_class.is_imaginary):
            continue
        for c_real in (True, False):
            if not (p.c_class.is_real if c_real else p.c_class.is_imaginary):
                continue
            sel = table[(s_real, c_real)]
            if sel not in out:
                out.append(sel)
    return tuple(out)


def _unilateral_equal(p: StructureProfile) -> Tuple[BlockSelector, ...]:
    if p.re_omega_relation in (ReOmegaRelation.Equal, ReOmegaRelation.Both):
        return _table_rows(p, _EQUAL_TABLE)
    return ()


def _unilateral_opposite(p: StructureProfile) -> Tuple[BlockSelector, ...]:
    if p.re_omega_relation in (ReOmegaRelation.Opposite, ReOmegaRelation.Both):
        return _table_rows(p, _OPPOSITE_TABLE)
    return ()


def _real_s_imag_c(p: StructureProfile) -> Tuple[BlockSelector, ...]:
    if not (p.s_class.is_real and p.c_class.is_imaginary):
        return ()
    out = []
    if p.coupling_pattern in (CouplingPattern.QCoupling, CouplingPattern.Decoupled):
        out.append(BlockSelector(Q, P))
    if p.coupling_pattern in (CouplingPattern.PCoupling, CouplingPattern.Decoupled):
        out.append(BlockSelector(P, Q))
    return tuple(out)


RULES: Tuple[Rule, ...] = (
    Rule("bilateral-real-scattering",
         "S real, Omega purely imaginary, C real or purely imaginary", _bilateral_real),
    Rule("bilateral-imaginary-scattering",
         "S and Omega purely imaginary, C real or purely imaginary", _bilateral_imag),
    Rule("unilateral-equal-re-omega",
         "Re(Omega_minus) = Re(Omega_plus), S and C each real or purely imaginary", _unilateral_equal),
    Rule("unilateral-opposite-re-omega",
         "Re(Omega_minus) = -Re(Omega_plus), S and C each real or purely imaginary", _unilateral_opposite),
    Rule("real-scattering-imaginary-coupling",
         "S real, C purely imaginary, C_minus = +/- C_plus", _real_s_imag_c),
)
_RULES_BY_ID = {r.rule_id: r for r in RULES}


@dataclass(frozen=True)
class Prediction:
    selector: BlockSelector
    rule_id: str
    hypothesis: str


def predict(prof: StructureProfile) -> List[Prediction]:
    """Every (selector, rule) pair the rule table yields; several rules may name one selector."""
    out: List[Prediction] = []
    for rule in RULES:
        for sel in rule.selectors(prof):
            out.append(Prediction(selector=sel, rule_id=rule.rule_id, hypothesis=rule.hypothesis))
    return out


def rule_holds(rule_id: str, prof: StructureProfile, selector: BlockSelector) -> bool:
    return selector in _RULES_BY_ID[rule_id].selectors(prof)


# -----------------------------
# Analysis
# -----------------------------
@dataclass(frozen=True)
class QNDFlag:
    variable: str
    rule_id: str
    observable: bool


@dataclass(frozen=True)
class BAEReport:
    profile: StructureProfile
    predictions: Tuple[Prediction, ...]
    verifications: Tuple[ZeroBlockCertificate, ...]
    qnd_flags: Tuple[QNDFlag, ...] = field(default=())

    def certificate(self, selector: BlockSelector) -> Optional[ZeroBlockCertificate]:
        for c in self.verifications:
            if c.selector == selector:
                return c
        return None

    @property
    def predicted_selectors(self) -> Tuple[BlockSelector, ...]:
        seen: List[BlockSelector] = []
        for p in self.predictions:
            if p.selector not in seen:
                seen.append(p.selector)
        return tuple(seen)

    @property
    def confirmed(self) -> bool:
        return all(c.verdict for c in self.verifications)


def _pair_output(C: np.ndarray, cls: StructureClass) -> np.ndarray:
    return C.real if cls.is_real else C.imag


def _qnd_flags(params: SystemParams, prof: StructureProfile, preds: List[Prediction],
               rank_tol: float) -> List[QNDFlag]:
    bilateral = [r for r in ("bilateral-real-scattering", "bilateral-imaginary-scattering")
                 if any(p.rule_id == r for p in preds)]
    flags: List[QNDFlag] = []
    Om, Op = params.Omega_minus, params.Omega_plus
    C_out = _pair_output(params.C_minus, prof.c_class)
    for rule_id in bilateral:
        if prof.coupling_pattern in (CouplingPattern.QCoupling, CouplingPattern.Decoupled):
            M = (1j * (Om + Op)).real
            flags.append(QNDFlag("q", rule_id, kalman.is_observable_pair(M, C_out, rank_tol)))
        if prof.coupling_pattern in (CouplingPattern.PCoupling, CouplingPattern.Decoupled):
            M = (1j * (Om - Op)).real
            flags.append(QNDFlag("p", rule_id, kalman.is_observable_pair(M, C_out, rank_tol)))
    return flags


def analyze(params: SystemParams, tol_profile: ToleranceProfile = DEFAULT_PROFILES["default"],
            real: Optional[QuadratureRealization] = None) -> BAEReport:
    """profile -> predict -> certify every predicted selector once."""
    prof = profile(params, tol_profile.classify_tol)
    preds = predict(prof)
    real = real or quadrature_realization(params, tol=tol_profile.validate_tol)
    certs: List[ZeroBlockCertificate] = []
    for pred in preds:
        if any(c.selector == pred.selector for c in certs):
            continue
        certs.append(certify_zero_block(real, pred.selector, tol_profile.certify_tol))
    for pred in preds:
        # citations are re-checked against the profile, not just recorded
        if not rule_holds(pred.rule_id, prof, pred.selector):
            raise InternalConsistencyError(f"rule {pred.rule_id} does not support {pred.selector.label}")
    report = BAEReport(
        profile=prof,
        predictions=tuple(preds),
        verifications=tuple(certs),
        qnd_flags=tuple(_qnd_flags(params, prof, preds, tol_profile.rank_tol)),
    )
    if preds and not report.confirmed:
        failed = [c.selector.label for c in certs if not c.verdict]
        log.warning("predicted zero blocks not confirmed: %s", ", ".join(failed))
    return report
