from __future__ import annotations

import itertools

import numpy as np
import pytest

from lqbae import bae
from lqbae.model import SystemParams, quadrature_realization, random_params
from lqbae.transfer import ALL_SELECTORS, BlockSelector, certify_zero_block
from lqbae.types import CouplingPattern, QuadBlock, ReOmegaRelation, StructureClass

Q, P = QuadBlock.QuadQ, QuadBlock.QuadP


def _orthogonal(n, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q


def _sym(n, rng):
    x = rng.standard_normal((n, n))
    return (x + x.T) / 2


def _antisym(n, rng):
    x = rng.standard_normal((n, n))
    return (x - x.T) / 2


def _structured(rng, *, s_real, c_real, re_omega, n=3, m=2):
    """S real or i·real, C₋/C₊ real or i·real (generic, so no ±pattern), Re Ω fixed by `re_omega`."""
    S = _orthogonal(m, rng) * (1.0 if s_real else 1j)
    f = 1.0 if c_real else 1j
    Cm = f * rng.standard_normal((m, n))
    Cp = f * rng.standard_normal((m, n))
    R = _sym(n, rng)
    Om = {"zero": 0.0, "equal": R, "opposite": R}[re_omega] + 1j * _antisym(n, rng)
    Op = {"zero": 0.0, "equal": R, "opposite": -R}[re_omega] + 1j * _sym(n, rng)
    return SystemParams(S=S, C_minus=Cm, C_plus=Cp, Omega_minus=Om, Omega_plus=Op)


def test_michelson_profile(michelson):
    prof = bae.profile(michelson)
    assert prof.s_class is StructureClass.Real
    assert prof.c_class is StructureClass.PurelyImaginary
    assert prof.coupling_pattern is CouplingPattern.QCoupling
    assert prof.re_omega_relation is ReOmegaRelation.Neither


def test_michelson_prediction_is_certified(michelson):
    report = bae.analyze(michelson)
    assert [(p.selector, p.rule_id) for p in report.predictions] == [
        (BlockSelector(Q, P), "real-scattering-imaginary-coupling")
    ]
    assert report.confirmed
    assert report.certificate(BlockSelector(Q, P)).verdict
    assert report.certificate(BlockSelector(P, Q)) is None


def _complement_is_generic(p, predicted, threshold=1e-3):
    real = quadrature_realization(p)
    others = [sel for sel in ALL_SELECTORS if sel not in set(predicted)]
    return all(certify_zero_block(real, sel).max_residual > threshold for sel in others)


def test_bilateral_real_scattering(rng):
    generic = 0
    for _ in range(200):
        p = _structured(rng, s_real=True, c_real=True, re_omega="zero")
        report = bae.analyze(p)
        assert set(report.predicted_selectors) == {BlockSelector(Q, P), BlockSelector(P, Q)}
        assert "bilateral-real-scattering" in {x.rule_id for x in report.predictions}
        assert report.confirmed
        generic += _complement_is_generic(p, report.predicted_selectors)
    # the diagonal blocks stay generic
    assert generic >= 190


def test_bilateral_imaginary_scattering(rng):
    generic = 0
    for c_real in (True, False) * 100:
        p = _structured(rng, s_real=False, c_real=c_real, re_omega="zero")
        report = bae.analyze(p)
        assert set(report.predicted_selectors) == {BlockSelector(Q, Q), BlockSelector(P, P)}
        assert report.confirmed
        generic += _complement_is_generic(p, report.predicted_selectors)
    assert generic >= 190


_EQUAL = {(True, True): (Q, P), (True, False): (P, Q), (False, True): (Q, Q), (False, False): (P, P)}
_OPPOSITE = {(True, True): (P, Q), (True, False): (Q, P), (False, True): (P, P), (False, False): (Q, Q)}


@pytest.mark.parametrize("relation,table", [("equal", _EQUAL), ("opposite", _OPPOSITE)])
def test_unilateral_tables(rng, relation, table):
    for s_real, c_real in itertools.product((True, False), repeat=2):
        expected = BlockSelector(*table[(s_real, c_real)])
        generic = 0
        for _ in range(50):
            p = _structured(rng, s_real=s_real, c_real=c_real, re_omega=relation)
            report = bae.analyze(p)
            assert report.predicted_selectors == (expected,), (relation, s_real, c_real)
            assert report.certificate(expected).verdict, (relation, s_real, c_real)
            generic += _complement_is_generic(p, report.predicted_selectors)
        assert generic >= 48, (relation, s_real, c_real, generic)


def test_no_prediction_for_generic_system(rng):
    report = bae.analyze(random_params(2, 2, rng))
    assert report.predictions == ()
    assert report.verifications == ()
    assert report.confirmed


def test_decoupled_system_certifies_everything():
    p = SystemParams.build(2, 1)
    report = bae.analyze(p)
    assert report.profile.coupling_pattern is CouplingPattern.Decoupled
    assert report.confirmed
    assert {f.variable for f in report.qnd_flags} == {"q", "p"}
    assert not any(f.observable for f in report.qnd_flags)


def test_rule_table_is_consistent(michelson):
    prof = bae.profile(michelson)
    assert bae.rule_holds("real-scattering-imaginary-coupling", prof, BlockSelector(Q, P))
    assert not bae.rule_holds("bilateral-real-scattering", prof, BlockSelector(Q, P))
    assert [r.rule_id for r in bae.RULES] == [
        "bilateral-real-scattering",
        "bilateral-imaginary-scattering",
        "unilateral-equal-re-omega",
        "unilateral-opposite-re-omega",
        "real-scattering-imaginary-coupling",
    ]


def test_classification_tolerance_is_relative(michelson):
    nudged = SystemParams(
        S=michelson.S + 1e-13j,
        C_minus=michelson.C_minus,
        C_plus=michelson.C_plus,
        Omega_minus=michelson.Omega_minus,
        Omega_plus=michelson.Omega_plus,
    )
    assert bae.profile(nudged).s_class is StructureClass.Real
    assert bae.profile(nudged, tol=1e-15).s_class is StructureClass.Neither
