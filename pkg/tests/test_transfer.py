from __future__ import annotations

import numpy as np
import pytest

from lqbae import algebra as alg
from lqbae import transfer
from lqbae.core import HypothesisError, InternalConsistencyError, PoleError, ShapeError
from lqbae.model import SystemParams, annihilation_realization, quadrature_realization, random_params
from lqbae.transfer import (
    ALL_SELECTORS,
    BlockSelector,
    RationalScalar,
    blockdiag_closed_form,
    certify_zero_block,
    evaluate,
    evaluate_annihilation,
    markov,
    siso_closed_form,
    stable_abscissa,
)
from lqbae.types import QuadBlock

Q, P = QuadBlock.QuadQ, QuadBlock.QuadP


def test_passive_cavity_transfer(cavity_real):
    s = 1.3 + 0.2j
    G = evaluate(cavity_real, s)
    np.testing.assert_allclose(G, (s - 0.5) / (s + 0.5) * np.eye(2), atol=1e-14)


def test_michelson_position_to_momentum_block(michelson_real):
    s = 0.7 + 0.3j
    G = evaluate(michelson_real, s)
    np.testing.assert_allclose(G[2:, :2], 2.0 / (s ** 2 + 1.0) * np.eye(2), atol=1e-13)
    np.testing.assert_allclose(G[:2, 2:], np.zeros((2, 2)), atol=1e-14)


def test_pole_is_refused(michelson_real):
    with pytest.raises(PoleError) as ei:
        evaluate(michelson_real, 1j)
    assert abs(ei.value.eigenvalue - 1j) < 1e-12


def test_quadrature_and_annihilation_forms_agree(rng):
    for _ in range(20):
        p = random_params(int(rng.integers(1, 4)), int(rng.integers(1, 3)), rng)
        real = quadrature_realization(p)
        ann = annihilation_realization(p)
        s = stable_abscissa(real.A) + 0.5 + rng.random() + 1j * rng.standard_normal()
        G = evaluate(real, s)
        conj = alg.to_quadrature(evaluate_annihilation(ann, s), p.m, p.m)
        assert alg.max_abs(G - conj) <= 1e-9 * (1.0 + alg.max_abs(G))


def test_markov_parameters(cavity_real):
    terms = markov(cavity_real, 2)
    assert len(terms) == 3
    np.testing.assert_allclose(terms[0], -np.eye(2))
    np.testing.assert_allclose(terms[2], -0.25 * np.eye(2))
    with pytest.raises(ValueError):
        markov(cavity_real, -1)


def test_certify_michelson_blocks(michelson_real):
    ok = certify_zero_block(michelson_real, BlockSelector(Q, P))
    assert ok.verdict and ok.max_residual <= 1e-10
    assert ok.cross_check_residual <= 1e-6
    assert ok.horizon == 4
    bad = certify_zero_block(michelson_real, BlockSelector(P, Q))
    assert not bad.verdict
    with pytest.raises(ValueError):
        certify_zero_block(michelson_real, BlockSelector(Q, P), tol=0.0)


def test_sampled_points_contradicting_markov_verdict_raise(michelson_real, monkeypatch):
    M = michelson_real.D.shape[0]
    monkeypatch.setattr(transfer, "evaluate", lambda real, s, *args: np.ones((M, M)))
    with pytest.raises(InternalConsistencyError, match="q_out<-p_in"):
        certify_zero_block(michelson_real, BlockSelector(Q, P))
    # a non-zero verdict has nothing to contradict
    assert not certify_zero_block(michelson_real, BlockSelector(P, Q)).verdict


def test_diagonal_blocks_carry_feedthrough(cavity_real):
    # G_qq of the cavity is not identically zero because D_qq = 1
    cert = certify_zero_block(cavity_real, BlockSelector(Q, Q))
    assert not cert.verdict
    assert cert.feedthrough_residual == 1.0


def test_selector_parsing_and_labels():
    sel = BlockSelector.parse("Q", "p")
    assert sel == BlockSelector(Q, P)
    assert sel.label == "q_out<-p_in"
    assert sel.is_cross
    assert len(ALL_SELECTORS) == 4
    with pytest.raises(ValueError):
        BlockSelector.parse("x", "p")


def test_siso_closed_form_on_cavity(cavity, cavity_real):
    rs = siso_closed_form(cavity, Q)
    assert str(rs) == "(s - 0.5)/(s + 0.5)"
    s = 0.4 + 2.0j
    assert abs(rs(s) - evaluate(cavity_real, s)[0, 0]) < 1e-13
    rp = siso_closed_form(cavity, P)
    assert abs(rp(s) - evaluate(cavity_real, s)[1, 1]) < 1e-13


def test_siso_closed_form_with_balanced_coupling():
    p = SystemParams.build(1, 1, C_minus=[[1.0]], C_plus=[[1.0]])
    rs = siso_closed_form(p, Q)
    assert rs(0.3 + 0.1j) == pytest.approx(1.0)


def test_siso_closed_form_preconditions(michelson):
    with pytest.raises(ShapeError):
        siso_closed_form(michelson)
    flipped = SystemParams.build(1, 1, S=[[-1.0]], C_minus=[[1.0]])
    with pytest.raises(HypothesisError):
        siso_closed_form(flipped)
    detuned = SystemParams.build(1, 1, C_minus=[[1.0]], Omega_minus=[[1.0]])
    with pytest.raises(HypothesisError):
        siso_closed_form(detuned)


def test_rational_scalar_rejects_zero_denominator():
    with pytest.raises(ValueError):
        RationalScalar((1.0,), (0.0, 1.0))


def _case_one_system() -> SystemParams:
    # C₊ = 0 and C₋ touches only the undriven mode
    return SystemParams.build(
        2, 1,
        C_minus=[[1.0, 0.0]],
        Omega_minus=np.diag([0.0, 3.0]),
        Omega_plus=np.diag([0.0, 1.0]),
    )


def test_blockdiag_closed_form_matches_realization():
    p = _case_one_system()
    blocks = blockdiag_closed_form(p, 1)
    s = 0.9 + 0.4j
    np.testing.assert_allclose(blocks.upper(s), [[(s - 0.5) / (s + 0.5)]], atol=1e-13)
    ann = annihilation_realization(p)
    np.testing.assert_allclose(blocks.annihilation(s), evaluate_annihilation(ann, s), atol=1e-12)
    np.testing.assert_allclose(blocks.quadrature(s), evaluate(quadrature_realization(p), s), atol=1e-12)


def test_blockdiag_closed_form_checks_its_case():
    p = _case_one_system()
    with pytest.raises(HypothesisError):
        blockdiag_closed_form(p, 2)
    with pytest.raises(ValueError):
        blockdiag_closed_form(p, 5)
    not_qnd = SystemParams.build(1, 1, C_minus=[[1.0]], Omega_minus=[[2.0]])
    with pytest.raises(HypothesisError):
        blockdiag_closed_form(not_qnd, 1)
