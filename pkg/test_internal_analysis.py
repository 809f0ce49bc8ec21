import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))

from cbf_minphase.cbf_core import build_gamma_spec
from cbf_minphase.constants import MinPhaseVerdict, SufficiencyVerdict
from cbf_minphase.errors import DependentColumnsError, InvalidCertificateError, NoRelativeDegreeError
from cbf_minphase.internal_analysis import (
    MinPhaseCertificate,
    estimate_certificate,
    extract_internal_linear,
    fixed_mu_equilibrium,
    gamma_min_sufficiency,
    linear_relative_degree,
    local_min_phase_jacobian,
    minimum_gamma_for_margin,
    multi_input_obstruction,
    quartic_margin,
)
from cbf_minphase.scenarios.cartpole import feedback_zero_dynamics
from cbf_minphase.scenarios.linear import CBF_ROW, linear_plant_matrices
from cbf_minphase.verify import negated_routh

SPEC = build_gamma_spec([2.0, 3.0])


def test_linear_relative_degree():
    mats = linear_plant_matrices(-1.0)
    assert linear_relative_degree(mats["A"], mats["B"], CBF_ROW) == 2
    assert linear_relative_degree(mats["A"], mats["B"], [0.0, 1.0, 0.0]) == 1
    with pytest.raises(NoRelativeDegreeError):
        linear_relative_degree(mats["A"], mats["B"], [0.0, 0.0, 0.0])


@pytest.mark.parametrize("a, verdict", [(-1.0, MinPhaseVerdict.MINIMUM_PHASE), (1.0, MinPhaseVerdict.NON_MINIMUM_PHASE)])
def test_extract_internal_linear(a, verdict):
    mats = linear_plant_matrices(a)
    zd = extract_internal_linear(mats["A"], mats["B"], CBF_ROW, SPEC)
    assert zd.min_phase == verdict
    np.testing.assert_allclose(zd.A_eta, [[a]], atol=1e-12)
    np.testing.assert_allclose(zd.B_eta, [[1.0, 1.0]], atol=1e-12)
    np.testing.assert_allclose(zd.BGamma, [0.5], atol=1e-12)
    np.testing.assert_allclose(np.abs(zd.N), [[0.0, 0.0, 1.0]], atol=1e-12)


def test_extract_internal_linear_injected_predicate():
    mats = linear_plant_matrices(-1.0)
    zd = extract_internal_linear(mats["A"], mats["B"], CBF_ROW, SPEC, hurwitz=negated_routh)
    assert zd.min_phase == MinPhaseVerdict.NON_MINIMUM_PHASE


def test_extract_internal_linear_rejects_degree_mismatch():
    mats = linear_plant_matrices(-1.0)
    with pytest.raises(ValueError):
        extract_internal_linear(mats["A"], mats["B"], CBF_ROW, build_gamma_spec([1.0]))


def test_fixed_mu_equilibrium():
    mats = linear_plant_matrices(-1.0)
    zd = extract_internal_linear(mats["A"], mats["B"], CBF_ROW, SPEC)
    np.testing.assert_allclose(fixed_mu_equilibrium(zd, 7.5), [3.75])


def test_local_jacobian_of_cartpole_zero_dynamics():
    b = 4.0
    field = feedback_zero_dynamics(b, math.radians(60.0))
    local = local_min_phase_jacobian(field, [0.05, 0.2], np.zeros(2))
    cos_d = math.sqrt(1.0 - 0.2**2)
    expected = np.array([[-b / cos_d, 1.0 / cos_d], [0.0, -1.0]])
    np.testing.assert_allclose(local.jacobian, expected, atol=1e-6)
    assert local.verdict == MinPhaseVerdict.MINIMUM_PHASE


def test_local_jacobian_unstable_field():
    local = local_min_phase_jacobian(lambda eta, phi: np.array([eta[0] + phi[0]]), [0.0], [0.0])
    assert local.verdict == MinPhaseVerdict.NON_MINIMUM_PHASE


def test_multi_input_obstruction():
    witness = multi_input_obstruction([1.0, 1.0], np.eye(2))
    np.testing.assert_allclose(witness.c, [1.0, -1.0] / np.sqrt(2.0), atol=1e-12)
    np.testing.assert_allclose(witness.q, witness.c)
    assert multi_input_obstruction([2.0], [[1.0], [0.0]]) is None
    with pytest.raises(DependentColumnsError):
        multi_input_obstruction([1.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])


def test_linear_mi_obstruction_moves_internal_state_only():
    mats = linear_plant_matrices(1.0)
    witness = multi_input_obstruction([1.0, 0.0], mats["B2"])
    np.testing.assert_allclose(witness.c, [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(witness.q, [0.0, 0.0, 1.0], atol=1e-12)


def test_gamma_min_sufficiency():
    good = MinPhaseCertificate(alpha1=0.5, alpha2=0.5, alpha3=1.0, alpha4=1.0, l_phi=math.sqrt(2.0), gamma_min=2.0)
    assert gamma_min_sufficiency(good) == SufficiencyVerdict.PASS
    weak = MinPhaseCertificate(alpha1=0.5, alpha2=0.5, alpha3=1.0, alpha4=0.1, l_phi=2.0, gamma_min=2.0)
    assert gamma_min_sufficiency(weak) == SufficiencyVerdict.FAIL_ALPHA
    broken = MinPhaseCertificate(alpha1=0.0, alpha2=0.5, alpha3=1.0, alpha4=1.0, l_phi=1.0, gamma_min=2.0)
    with pytest.raises(InvalidCertificateError):
        gamma_min_sufficiency(broken)


def test_quartic_margin_threshold():
    threshold = minimum_gamma_for_margin(1.0, 1.0, 1.0, 0.0, 0.0)
    assert threshold == pytest.approx(math.sqrt((1.0 + math.sqrt(5.0)) / 2.0))
    assert quartic_margin(1.0, 1.0, 1.0, 0.0, 0.0, threshold) == pytest.approx(0.0, abs=1e-9)
    assert quartic_margin(1.0, 1.0, 1.0, 0.0, 0.0, threshold + 0.1) > 0.0
    assert quartic_margin(1.0, 1.0, 1.0, 0.0, 0.0, 1.0) < 0.0
    assert minimum_gamma_for_margin(1.0, 1.0, 1.0, 0.0, 1.0) is None


def test_estimate_certificate_linear_minimum_phase():
    mats = linear_plant_matrices(-1.0)
    zd = extract_internal_linear(mats["A"], mats["B"], CBF_ROW, SPEC)

    def field(eta, phi):
        return zd.A_eta @ eta + zd.B_eta @ phi

    zero_phi = lambda eta: SPEC.Gamma * 7.5  # noqa: E731
    samples = [np.array([v]) for v in (2.0, 3.0, 4.5, 6.0)]
    cert = estimate_certificate(field, zero_phi, samples, SPEC.gamma_min, eta_e=[3.75])
    assert cert.alpha1 == pytest.approx(0.5)
    assert cert.alpha4 == pytest.approx(1.0, rel=1e-6)
    assert cert.l_phi == pytest.approx(math.sqrt(2.0), rel=1e-6)
    assert gamma_min_sufficiency(cert) == SufficiencyVerdict.PASS


def test_estimate_certificate_rejects_unstable_zero_dynamics():
    with pytest.raises(InvalidCertificateError):
        estimate_certificate(lambda eta, phi: eta.copy(), lambda eta: np.zeros(2), [np.array([1.0])], 2.0)
