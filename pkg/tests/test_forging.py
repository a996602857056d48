"""Decomposition checks; reconstruction oracles are built term-by-term here."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from forgecut import forging, qsim
from forgecut.forging import (DecompositionError, PauliLabel, ProductTerm,
                              QuasiDecomposition, SchmidtForm, bell_state, forge_bell,
                              forge_schmidt, materialize)
from forgecut.qsim import Axis


def brute_force_reconstruction(decomp: QuasiDecomposition) -> np.ndarray:
    """Independent oracle: explicit signed sum of dense products."""
    total = None
    for term in decomp.terms:
        a = materialize(term.state_a).matrix
        b = materialize(term.state_b).matrix
        contrib = term.coefficient * np.kron(b, a)
        total = contrib if total is None else total + contrib
    return total


class TestForgeBell:
    def test_coefficients(self):
        decomp = forge_bell()
        coeffs = [t.coefficient for t in decomp.terms]
        assert sorted(coeffs) == [-0.5, -0.5, 0.5, 0.5, 0.5, 0.5]
        by_axis = {}
        for term in decomp.terms:
            by_axis.setdefault(term.state_a.axis, []).append(term.coefficient)
        assert by_axis[Axis.Z] == [0.5, 0.5]
        assert by_axis[Axis.X] == [0.5, 0.5]
        assert by_axis[Axis.Y] == [-0.5, -0.5]

    def test_z_factor_exact_rational(self):
        decomp = forge_bell()
        assert sum(Fraction(abs(t.coefficient)) for t in decomp.terms) == Fraction(3)
        assert sum(Fraction(t.coefficient) for t in decomp.terms) == Fraction(1)
        assert decomp.z_factor == 3.0

    def test_reconstruction_exact(self):
        decomp = forge_bell()
        residual = np.max(np.abs(decomp.reconstruct().matrix - bell_state().matrix))
        assert residual < 1e-15
        oracle = brute_force_reconstruction(decomp)
        np.testing.assert_allclose(oracle, bell_state().matrix, atol=1e-15)

    def test_terms_match_labels_on_both_sides(self):
        for term in forge_bell().terms:
            assert isinstance(term.state_a, PauliLabel)
            assert term.state_a == term.state_b


class TestForgeSchmidt:
    def test_single_coefficient_product_state(self):
        decomp = forge_schmidt(SchmidtForm((1.0,)))
        assert len(decomp) == 1
        assert decomp.z_factor == 1.0

    def test_uniform_lambdas_reproduce_bell_forging(self):
        decomp = forge_schmidt(SchmidtForm((1 / math.sqrt(2), 1 / math.sqrt(2))))
        np.testing.assert_allclose(decomp.reconstruct().matrix, bell_state().matrix,
                                   atol=1e-12)
        bell_terms = {(str(t.state_a), round(t.coefficient, 12)) for t in forge_bell().terms}
        schmidt_terms = {(str(t.state_a), round(t.coefficient, 12)) for t in decomp.terms}
        assert bell_terms == schmidt_terms

    def test_skewed_lambdas(self):
        lams = (math.sqrt(0.9), math.sqrt(0.1))
        form = SchmidtForm(lams)
        decomp = forge_schmidt(form)
        target = np.zeros(4, dtype=complex)
        target[0b00], target[0b11] = lams
        expected = np.outer(target, target.conj())
        np.testing.assert_allclose(decomp.reconstruct().matrix, expected, atol=1e-12)
        np.testing.assert_allclose(brute_force_reconstruction(decomp), expected, atol=1e-12)

    def test_random_states_with_unitaries(self, rng):
        for trial in range(10):
            lams = rng.random(2) + 0.1
            lams = np.sort(lams / np.linalg.norm(lams))[::-1]
            form = SchmidtForm(tuple(lams), qsim.random_unitary(2, rng),
                               qsim.random_unitary(2, rng))
            decomp = forge_schmidt(form)
            np.testing.assert_allclose(decomp.reconstruct().matrix, form.density().matrix,
                                       atol=1e-12)

    def test_higher_schmidt_rank(self, rng):
        lams = np.sort(rng.random(3) + 0.2)[::-1]
        lams = tuple(lams / np.linalg.norm(lams))
        decomp = forge_schmidt(SchmidtForm(lams))
        form = SchmidtForm(lams)
        np.testing.assert_allclose(decomp.reconstruct().matrix, form.density().matrix,
                                   atol=1e-12)
        assert decomp.z_factor >= 1.0

    def test_z_monotonicity(self):
        # Z = 1 iff a single coefficient; always >= 1
        assert forge_schmidt(SchmidtForm((1.0,))).z_factor == 1.0
        for lam_sq in (0.99, 0.9, 0.6, 0.5):
            lams = (math.sqrt(lam_sq), math.sqrt(1 - lam_sq))
            z = forge_schmidt(SchmidtForm(lams)).z_factor
            assert z > 1.0
            expected = 1.0 + 4.0 * lams[0] * lams[1]
            assert z == pytest.approx(expected, abs=1e-12)

    def test_invalid_coefficients_rejected(self):
        with pytest.raises(DecompositionError):
            SchmidtForm((0.9, 0.1))  # squares don't sum to 1
        with pytest.raises(DecompositionError):
            SchmidtForm((0.3, math.sqrt(1 - 0.09)))  # not descending
        with pytest.raises(DecompositionError):
            SchmidtForm((-1.0,))


class TestZFactorAndSampling:
    def test_tensor_of_two_bells(self):
        joint = forge_bell().tensor(forge_bell())
        assert joint.z_factor == pytest.approx(9.0, abs=1e-12)
        assert len(joint) == 36

    def test_single_product_term(self):
        term = ProductTerm(1.0, PauliLabel(Axis.Z, 0), PauliLabel(Axis.Z, 0))
        decomp = QuasiDecomposition([term], PauliLabel(Axis.Z, 0).density().tensor(
            PauliLabel(Axis.Z, 0).density()))
        assert decomp.z_factor == 1.0
        sampled, sign = decomp.sample_term(np.random.default_rng(0))
        assert sampled is term and sign == 1

    def test_sample_term_multinomial(self):
        decomp = forge_bell()
        rng = np.random.default_rng(42)
        n = 100_000
        counts = {}
        negatives = 0
        for _ in range(n):
            term, sign = decomp.sample_term(rng)
            counts[str(term.state_a)] = counts.get(str(term.state_a), 0) + 1
            negatives += sign < 0
        q = 1 / 6
        sigma = math.sqrt(q * (1 - q) / n)
        for label, count in counts.items():
            assert abs(count / n - q) < 5 * sigma, label
        p_neg = 1 / 3
        sigma_neg = math.sqrt(p_neg * (1 - p_neg) / n)
        assert abs(negatives / n - p_neg) < 5 * sigma_neg

    def test_sign_matches_coefficient(self):
        decomp = forge_bell()
        rng = np.random.default_rng(7)
        for _ in range(200):
            term, sign = decomp.sample_term(rng)
            assert sign == (1 if term.coefficient > 0 else -1)


class TestValidation:
    def test_empty_decomposition_invalid(self):
        decomp = QuasiDecomposition([], bell_state(), check=False)
        zero = decomp.reconstruct()
        assert zero.trace_weight == 0.0
        np.testing.assert_array_equal(zero.matrix, np.zeros((4, 4)))
        with pytest.raises(DecompositionError):
            decomp.validate()

    def test_coefficient_sum_enforced(self):
        terms = [ProductTerm(0.5, PauliLabel(Axis.Z, 0), PauliLabel(Axis.Z, 0))]
        with pytest.raises(DecompositionError, match="sum"):
            QuasiDecomposition(terms)

    def test_reconstruction_residual_enforced(self):
        terms = [ProductTerm(1.0, PauliLabel(Axis.Z, 0), PauliLabel(Axis.Z, 0))]
        with pytest.raises(DecompositionError, match="residual"):
            QuasiDecomposition(terms, bell_state())

    def test_zero_coefficient_rejected(self):
        with pytest.raises(DecompositionError):
            ProductTerm(0.0, PauliLabel(Axis.Z, 0), PauliLabel(Axis.Z, 0))

    def test_every_constructed_decomposition_validates(self, rng):
        for lams in [(1.0,), (math.sqrt(0.7), math.sqrt(0.3))]:
            decomp = forge_schmidt(SchmidtForm(lams))
            total = sum(t.coefficient for t in decomp.terms)
            assert abs(total - 1.0) < 1e-10
            decomp.validate()
