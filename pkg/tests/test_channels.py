import dataclasses
import json

import numpy as np
import pytest

from thermoshadow.channels import (
    GaussianFilter,
    MeasurementChannel,
    apply_channel,
    bohr_decompose,
    build_channel,
    conjugation_residual,
    default_group_tol,
    default_subnormalization,
    exact_signal,
    filter_identity_residual,
    filter_weight,
    operator_fourier_transform,
    polarize,
    signal_identity_residual,
    verify_detailed_balance,
)
from thermoshadow.errors import ConstructionError, InputError, NumericError
from thermoshadow.operators import (
    DensityMatrix,
    HermitianOperator,
    build_hamiltonian,
    eig_decompose,
    gibbs_state,
)

from conftest import (
    random_hamiltonian,
    random_pauli_observable,
    random_pure_state,
    rng_for,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
ID2 = np.eye(2, dtype=complex)


def two_level_setup(beta=1.0, sigma=1.0, c=0.5, observable="Z"):
    h = build_hamiltonian([(1.0, "Z")], 1)
    a = build_hamiltonian([(1.0, observable)], 1)
    ch = build_channel(a, h, beta, sigma, c)
    rho = gibbs_state(eig_decompose(h), beta)
    return h, a, ch, rho


class TestGaussianFilter:
    def test_zero_frequency_value(self):
        filt = GaussianFilter(beta=1.0, sigma=1.0)
        assert filter_weight(filt, 0.0) == pytest.approx(np.exp(-1 / 8), rel=1e-15)

    def test_printed_formula_value(self):
        filt = GaussianFilter(beta=2.0, sigma=1.0)
        assert filter_weight(filt, 1.0) == pytest.approx(np.exp(-9 / 8), rel=1e-15)

    def test_functional_equation_random(self):
        rng = rng_for(21)
        for _ in range(200):
            filt = GaussianFilter(rng.uniform(0.05, 3.0), rng.uniform(0.4, 2.0))
            nu = rng.uniform(-6, 6, size=50)
            assert filter_identity_residual(filt, nu).max() <= 1e-12

    def test_zero_weight_in_unit_interval(self):
        for sigma in (0.5, 1.0, 2.0):
            g0 = GaussianFilter(1.0, sigma).weight_at_zero
            assert 0.0 < g0 <= 1.0

    def test_invalid_parameters(self):
        with pytest.raises(InputError):
            GaussianFilter(-1.0, 1.0)
        with pytest.raises(InputError):
            GaussianFilter(1.0, 0.0)


class TestBohrDecomposition:
    def test_x_against_z_splits_into_two_groups(self):
        spec = eig_decompose(HermitianOperator(Z))
        decomp = bohr_decompose(HermitianOperator(X), spec, 1e-9)
        by_freq = {round(nu): comp for nu, comp in decomp.groups}
        assert set(by_freq) == {-2, 2}
        np.testing.assert_allclose(by_freq[2], [[0, 1], [0, 0]], atol=1e-12)
        np.testing.assert_allclose(by_freq[-2], [[0, 0], [1, 0]], atol=1e-12)

    def test_commuting_observable_single_group(self):
        spec = eig_decompose(HermitianOperator(Z))
        decomp = bohr_decompose(HermitianOperator(Z), spec, 1e-9)
        assert len(decomp.groups) == 1
        nu, comp = decomp.groups[0]
        assert nu == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(comp, Z, atol=1e-12)

    def test_identity_observable(self):
        rng = rng_for(22)
        h = random_hamiltonian(2, rng)
        spec = eig_decompose(h)
        decomp = bohr_decompose(HermitianOperator(np.eye(4)), spec, 1e-9)
        assert len(decomp.groups) == 1
        np.testing.assert_allclose(decomp.groups[0][1], np.eye(4), atol=1e-12)

    def test_components_sum_to_source(self):
        rng = rng_for(23)
        for _ in range(5):
            h = random_hamiltonian(2, rng)
            a = random_pauli_observable(2, rng)
            spec = eig_decompose(h)
            decomp = bohr_decompose(a, spec, default_group_tol(h.norm()))
            np.testing.assert_allclose(decomp.component_sum(), a.matrix, atol=1e-10)

    def test_components_supported_on_matching_gaps(self):
        rng = rng_for(24)
        h = random_hamiltonian(2, rng)
        a = random_pauli_observable(2, rng)
        spec = eig_decompose(h)
        tol = default_group_tol(h.norm())
        decomp = bohr_decompose(a, spec, tol)
        e = spec.eigenvalues
        v = spec.eigenvectors
        gaps = e[:, None] - e[None, :]
        for nu, comp in decomp.groups:
            comp_eig = v.conj().T @ comp @ v
            support = np.abs(comp_eig) > 1e-12
            assert np.all(np.abs(gaps[support] - nu) <= 10 * tol + 1e-12)

    def test_dimension_mismatch(self):
        spec = eig_decompose(HermitianOperator(Z))
        with pytest.raises(InputError):
            bohr_decompose(HermitianOperator(np.eye(4)), spec, 1e-9)


class TestOperatorFourierTransform:
    def test_commuting_case_scales_by_g0(self):
        spec = eig_decompose(HermitianOperator(Z))
        filt = GaussianFilter(1.3, 0.9)
        decomp = bohr_decompose(HermitianOperator(Z), spec, 1e-9)
        out = operator_fourier_transform(decomp, filt)
        np.testing.assert_allclose(out, filt.weight_at_zero * Z, atol=1e-12)

    def test_two_frequency_entries_and_ratio(self):
        spec = eig_decompose(HermitianOperator(Z))
        filt = GaussianFilter(1.0, 1.0)
        decomp = bohr_decompose(HermitianOperator(X), spec, 1e-9)
        out = operator_fourier_transform(decomp, filt)
        assert out[0, 1] == pytest.approx(np.exp(-9 / 8), rel=1e-12)
        assert out[1, 0] == pytest.approx(np.exp(-1 / 8), rel=1e-12)
        # balance ratio g(nu)/g(-nu) = exp(-beta*nu/2) at nu = 2
        assert out[0, 1] / out[1, 0] == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_norm_never_grows(self):
        rng = rng_for(25)
        for _ in range(5):
            h = random_hamiltonian(2, rng)
            a = random_pauli_observable(2, rng)
            spec = eig_decompose(h)
            filt = GaussianFilter(rng.uniform(0.2, 2.0), rng.uniform(0.6, 1.5))
            decomp = bohr_decompose(a, spec, default_group_tol(h.norm()))
            out = operator_fourier_transform(decomp, filt)
            assert np.linalg.norm(out, 2) <= a.norm() + 1e-9

    def test_conjugation_identity_residual_small(self):
        rng = rng_for(26)
        h = random_hamiltonian(2, rng)
        a = random_pauli_observable(2, rng)
        spec = eig_decompose(h)
        filt = GaussianFilter(1.1, 1.0)
        decomp = bohr_decompose(a, spec, default_group_tol(h.norm()))
        out = operator_fourier_transform(decomp, filt)
        assert conjugation_residual(out, spec, filt.beta) <= 1e-10


class TestPolarize:
    def test_zero_input(self):
        plus, minus = polarize(np.zeros((2, 2)))
        np.testing.assert_allclose(plus, ID2 / 2)
        np.testing.assert_allclose(minus, ID2 / 2)

    def test_diagonal_arithmetic(self):
        g0 = GaussianFilter(1.0, 1.0).weight_at_zero
        plus, minus = polarize(g0 * Z)
        np.testing.assert_allclose(plus, np.diag([(1 + g0) / 2, (1 - g0) / 2]))
        np.testing.assert_allclose(minus, np.diag([(1 - g0) / 2, (1 + g0) / 2]))

    def test_gram_difference_identity(self):
        rng = rng_for(27)
        for _ in range(5):
            z = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            a_hat = 0.9 * z / np.linalg.norm(z, 2)
            plus, minus = polarize(a_hat)
            diff = plus.conj().T @ plus - minus.conj().T @ minus
            expected = 0.5 * (a_hat.conj().T + a_hat)
            assert np.max(np.abs(diff - expected)) <= 1e-10

    def test_norm_violation_named(self):
        with pytest.raises(ConstructionError, match="norm"):
            polarize(1.5 * Z)


class TestBuildChannel:
    def test_signal_difference_matches_magnetization(self):
        _, _, ch, rho = two_level_setup()
        grams = ch.grams()
        p1 = np.trace(grams[1] @ rho.matrix).real
        p2 = np.trace(grams[2] @ rho.matrix).real
        assert p1 - p2 == pytest.approx(0.25 * -np.tanh(1.0), abs=1e-9)

    def test_identity_observable_signal(self):
        h = build_hamiltonian([(1.0, "Z")], 1)
        a = HermitianOperator(np.eye(2))
        ch = build_channel(a, h, 1.0, 1.0, 0.5)
        rho = gibbs_state(eig_decompose(h), 1.0)
        grams = ch.grams()
        p1 = np.trace(grams[1] @ rho.matrix).real
        p2 = np.trace(grams[2] @ rho.matrix).real
        assert p1 - p2 == pytest.approx(0.25, abs=1e-10)
        assert exact_signal(ch, rho) == pytest.approx(1.0, abs=1e-9)

    def test_random_three_qubit_channel_verifies(self):
        rng = rng_for(28)
        h = random_hamiltonian(3, rng)
        a = random_pauli_observable(3, rng)
        ch = build_channel(a, h, 1.0, 1.0, 0.1)
        rho = gibbs_state(eig_decompose(h), 1.0)
        report = verify_detailed_balance(ch, rho, tol=1e-9)
        assert report.passed, report.as_dict()

    def test_g0_recorded_from_filter(self):
        for sigma in (0.8, 1.0, 1.4):
            h = build_hamiltonian([(1.0, "Z")], 1)
            a = build_hamiltonian([(1.0, "Z")], 1)
            ch = build_channel(a, h, 1.0, sigma, 0.2)
            assert ch.g0 == GaussianFilter(1.0, sigma).weight_at_zero

    def test_rejects_oversized_c(self):
        # sigma = 0.3 gives 2*g(0) ~ 0.499, so c = 0.55 is in (0, 1] but
        # still breaks the rejection-operator existence bound.
        h = build_hamiltonian([(1.0, "Z")], 1)
        a = build_hamiltonian([(1.0, "Z")], 1)
        assert 2.0 * GaussianFilter(1.0, 0.3).weight_at_zero < 0.55
        with pytest.raises(ConstructionError, match="2\\*g"):
            build_channel(a, h, 1.0, 0.3, 0.55)

    def test_rejects_oversized_observable(self):
        h = build_hamiltonian([(1.0, "Z")], 1)
        with pytest.raises(InputError, match="norm"):
            build_channel(HermitianOperator(1.5 * Z), h, 1.0, 1.0, 0.5)

    def test_subnormalization_cap_over_pure_states(self):
        rng = rng_for(29)
        _, _, ch, _ = two_level_setup(beta=0.7, sigma=1.2, c=0.3)
        grams = ch.grams()
        for _ in range(100):
            psi = random_pure_state(2, rng)
            for label in (1, 2):
                prob = np.real(psi.conj() @ grams[label] @ psi)
                assert prob <= ch.c + 1e-9

    def test_default_subnormalization_allows_construction(self):
        for sigma in (0.5, 1.0, 2.0):
            c = default_subnormalization(sigma)
            h = build_hamiltonian([(1.0, "Z")], 1)
            a = build_hamiltonian([(1.0, "X")], 1)
            ch = build_channel(a, h, 1.0, sigma, c)
            assert 0 < c <= 0.5
            assert ch.c == c

    def test_singular_thermal_state_raises(self):
        h = build_hamiltonian([(30.0, "Z")], 1)
        a = build_hamiltonian([(1.0, "Z")], 1)
        with pytest.raises(NumericError, match="reduce beta"):
            with pytest.warns(RuntimeWarning, match="conditioning"):
                build_channel(a, h, 2.0, 1.0, 0.5)


class TestApplyChannel:
    def test_probabilities_sum_to_one(self):
        _, _, ch, rho = two_level_setup()
        action = apply_channel(ch, rho)
        assert action.probs.sum() == pytest.approx(1.0, abs=1e-10)

    def test_label_one_capped_by_c(self):
        rng = rng_for(30)
        _, _, ch, _ = two_level_setup(c=0.4)
        for _ in range(50):
            psi = random_pure_state(2, rng)
            state = DensityMatrix(np.outer(psi, psi.conj()), validate=False)
            action = apply_channel(ch, state)
            assert action.probs[1] <= ch.c + 1e-9
            assert action.probs[2] <= ch.c + 1e-9

    def test_infinite_temperature_symmetry(self):
        h = build_hamiltonian([(1.0, "Z")], 1)
        a = build_hamiltonian([(1.0, "Z")], 1)
        ch = build_channel(a, h, 0.0, 1.0, 0.5)
        rho = DensityMatrix(np.eye(2) / 2)
        action = apply_channel(ch, rho)
        assert action.probs[1] == pytest.approx(action.probs[2], abs=1e-12)

    def test_marginal_output_preserves_thermal_state(self):
        _, _, ch, rho = two_level_setup()
        action = apply_channel(ch, rho)
        np.testing.assert_allclose(action.marginal.matrix, rho.matrix, atol=1e-12)

    def test_zero_probability_branch_flagged(self):
        kraus = np.stack([np.eye(2, dtype=complex), np.zeros((2, 2)), np.zeros((2, 2))])
        ch = MeasurementChannel(kraus=kraus, c=0.5, g0=1.0, sigma=1.0, beta=1.0)
        action = apply_channel(ch, DensityMatrix(np.eye(2) / 2))
        assert action.post_states[0] is not None
        assert action.post_states[1] is None
        assert action.post_states[2] is None


class TestExactSignal:
    def test_z_magnetization(self):
        _, _, ch, rho = two_level_setup()
        assert exact_signal(ch, rho) == pytest.approx(-np.tanh(1.0), abs=1e-9)

    def test_off_diagonal_observable_reads_zero(self):
        _, _, ch, rho = two_level_setup(observable="X", beta=0.6)
        assert exact_signal(ch, rho) == pytest.approx(0.0, abs=1e-12)

    def test_signal_identity_on_non_gibbs_diagonal_states(self):
        rng = rng_for(31)
        h = random_hamiltonian(2, rng)
        a = random_pauli_observable(2, rng)
        spec = eig_decompose(h)
        ch = build_channel(a, h, 1.0, 1.0, 0.3)
        for _ in range(5):
            weights = rng.dirichlet(np.ones(4))
            v = spec.eigenvectors
            diag_state = DensityMatrix((v * weights) @ v.conj().T, validate=False)
            assert signal_identity_residual(ch, diag_state, a) <= 1e-9
            assert exact_signal(ch, diag_state) == pytest.approx(
                np.trace(diag_state.matrix @ a.matrix).real, abs=1e-9
            )


class TestVerifyDetailedBalance:
    def test_constructed_channels_pass(self):
        rng = rng_for(32)
        for n in (1, 2):
            h = random_hamiltonian(n, rng)
            a = random_pauli_observable(n, rng)
            ch = build_channel(a, h, 0.8, 1.0, 0.3)
            rho = gibbs_state(eig_decompose(h), 0.8)
            report = verify_detailed_balance(ch, rho, tol=1e-8)
            assert report.passed, report.as_dict()

    def test_commuting_case_per_kraus_exact(self):
        _, _, ch, rho = two_level_setup()
        report = verify_detailed_balance(ch, rho)
        assert report.kms_kraus_1 == 0.0
        assert report.kms_kraus_2 == 0.0

    def test_corrupted_kraus_detected(self):
        _, _, ch, rho = two_level_setup()
        kraus = ch.kraus.copy()
        kraus[1] = 1.01 * kraus[1]
        bad = dataclasses.replace(ch, kraus=kraus)
        report = verify_detailed_balance(bad, rho, tol=1e-8)
        assert report.fixed_point > 1e-8
        assert not report.passed

    def test_phase_channel_fixes_state_but_fails_balance(self):
        # A diagonal unitary with a nontrivial phase keeps every diagonal
        # state fixed yet is not self-adjoint in the weighted inner
        # product; only the kms residuals should flag it.
        kraus = np.stack(
            [np.diag([1.0, np.exp(0.7j)]), np.zeros((2, 2)), np.zeros((2, 2))]
        ).astype(complex)
        ch = MeasurementChannel(kraus=kraus, c=0.5, g0=1.0, sigma=1.0, beta=1.0)
        rho = gibbs_state(eig_decompose(HermitianOperator(Z)), 1.0)
        report = verify_detailed_balance(ch, rho, tol=1e-8)
        assert report.completeness <= 1e-12
        assert report.fixed_point <= 1e-12
        assert report.kms_channel > 1e-2
        assert not report.passed

    def test_mismatched_temperature_fails_fixed_point(self):
        h = build_hamiltonian([(1.0, "Z")], 1)
        a = build_hamiltonian([(1.0, "X")], 1)
        ch = build_channel(a, h, 1.0, 1.0, 0.5)
        wrong_rho = gibbs_state(eig_decompose(h), 2.5)
        report = verify_detailed_balance(ch, wrong_rho, tol=1e-8)
        assert report.fixed_point > 1e-4
        assert not report.passed

    def test_report_serializes_with_exact_field_names(self):
        _, _, ch, rho = two_level_setup()
        payload = json.loads(json.dumps(verify_detailed_balance(ch, rho).as_dict()))
        assert {
            "completeness",
            "fixed_point",
            "kms_channel",
            "kms_kraus_1",
            "kms_kraus_2",
        } <= set(payload)

    def test_singular_state_rejected(self):
        _, _, ch, _ = two_level_setup()
        pure = DensityMatrix(np.diag([1.0, 0.0]).astype(complex))
        with pytest.raises(NumericError, match="singular"):
            verify_detailed_balance(ch, pure)
