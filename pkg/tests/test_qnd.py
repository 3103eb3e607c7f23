from __future__ import annotations

import numpy as np
import pytest

from lqbae import qnd
from lqbae.core import HypothesisError, InternalConsistencyError, ShapeError
from lqbae.model import SystemParams, quadrature_realization, random_params
from lqbae.transfer import evaluate


def _frozen_l_system(rng) -> SystemParams:
    """L couples to modes 1-2 only, H acts on mode 3 only; L is self-adjoint."""
    c = np.zeros((1, 3))
    c[0, :2] = rng.standard_normal(2)
    w, v = rng.standard_normal(2)
    return SystemParams.build(
        3, 1,
        C_minus=c,
        C_plus=c,
        Omega_minus=np.diag([0.0, 0.0, abs(w) + 0.5]),
        Omega_plus=np.diag([0.0, 0.0, v]),
    )


def test_commutator_vanishes_for_qnd_system(qnd_system):
    assert qnd.commutator_LH(qnd_system).is_zero(1e-14)
    assert qnd.commutator_LdagH(qnd_system).is_zero(1e-14)
    assert qnd.is_qnd_interaction(qnd_system)


def test_michelson_is_not_a_qnd_interaction(michelson):
    assert not qnd.is_qnd_interaction(michelson)
    with pytest.raises(HypothesisError):
        qnd.qnd_interaction_consequences(michelson)


def test_random_systems_fail_both_forms(rng):
    for _ in range(1000):
        p = random_params(int(rng.integers(1, 4)), int(rng.integers(1, 3)), rng)
        r_pair, r_matrix = qnd.qnd_interaction_residuals(p)
        assert (r_pair <= 1e-6) == (r_matrix <= 1e-6)
        assert r_pair > 1e-6 and r_matrix > 1e-6
        assert not qnd.is_qnd_interaction(p)


def test_consequences_of_a_frozen_coupling(rng):
    for _ in range(200):
        p = _frozen_l_system(rng)
        assert qnd.is_qnd_interaction(p)
        cons = qnd.qnd_interaction_consequences(p)
        assert cons.self_adjoint.holds and cons.commuting.holds
        assert cons.failed == []
        assert cons.transfer_is_feedthrough
        assert cons.dL_vanishes
        real = quadrature_realization(p)
        np.testing.assert_allclose(evaluate(real, 0.8 + 0.3j), real.D, atol=1e-12)


def test_consequences_report_missing_self_adjointness():
    # [L, H] = 0 with H = 0, but L = a is not self-adjoint
    p = SystemParams.build(1, 1, C_minus=[[1.0]])
    cons = qnd.qnd_interaction_consequences(p)
    assert not cons.self_adjoint.holds
    assert "self_adjoint" in cons.failed
    assert not cons.transfer_is_feedthrough


def test_siso_g(cavity, michelson):
    assert qnd.siso_g(cavity) == 1.0
    balanced = SystemParams.build(1, 1, C_minus=[[2.0]], C_plus=[[1.0]])
    assert qnd.siso_g(balanced) == 3.0
    with pytest.raises(ShapeError):
        qnd.siso_g(michelson)


def test_scan_finds_the_conserved_position(qnd_system):
    real = quadrature_realization(qnd_system)
    found = qnd.qnd_scan(real)
    assert len(found) == 1
    v = found[0]
    assert v.is_qnd
    np.testing.assert_allclose(v.coefficients, [1.0, 0.0, 0.0, 0.0], atol=1e-12)


def test_p_coupling_characterization():
    p = SystemParams.build(1, 1, C_minus=[[1.0]], C_plus=[[-1.0]],
                           Omega_minus=[[0.7]], Omega_plus=[[-0.7]])
    (rep,) = qnd.qnd_characterize(p)
    assert rep.origin == "p-coupling"
    assert rep.variable == "p"
    assert rep.uncontrollable
    assert rep.observable_pairs == (False, True)
    assert rep.is_qnd
    assert rep.closed_form_residual <= 1e-10


def test_q_coupling_characterization():
    p = SystemParams.build(1, 1, C_minus=[[1.0]], C_plus=[[1.0]],
                           Omega_minus=[[0.3]], Omega_plus=[[0.3]])
    (rep,) = qnd.qnd_characterize(p)
    assert rep.origin == "q-coupling"
    assert rep.variable == "q"
    assert rep.is_qnd
    assert rep.closed_form_residual <= 1e-10


def test_closed_form_disagreement_raises(monkeypatch):
    p = SystemParams.build(1, 1, C_minus=[[1.0]], C_plus=[[1.0]],
                           Omega_minus=[[0.3]], Omega_plus=[[0.3]])
    monkeypatch.setattr(qnd, "_case_closed_forms", lambda params, real, block: 1e-3)
    with pytest.raises(InternalConsistencyError, match="q-coupling"):
        qnd.qnd_characterize(p)


def test_generic_system_has_no_qnd_variable():
    p = SystemParams.build(1, 1, C_minus=[[1.0]], Omega_minus=[[1.0]], Omega_plus=[[1.0]])
    assert qnd.qnd_characterize(p) == []


def test_functional_report_on_michelson(michelson_real):
    # mirror momentum is driven by the field and never read directly
    rep = qnd.functional_report(michelson_real, [0.0, 0.0, 1.0, 0.0], "p1", "manual")
    assert not rep.uncontrollable
    assert rep.observable
