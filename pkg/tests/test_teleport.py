"""Teleportation protocols against closed-form and full-circuit oracles."""

import math

import numpy as np
import pytest

from forgecut import forging, qsim, teleport
from forgecut.qsim import Axis, DensityOperator, PureState
from forgecut.teleport import (BellOutcome, NonTeleportableGateError, conditional_prob,
                               forged_teleportation, gate_teleport, is_teleportable,
                               pauli_expand, qst_equivalence)


def bell_inner_product_oracle(rho_c, rho_ai, s) -> float:
    """p(s|i) from first principles: <B_s| rho_C ⊗ rho_Ai |B_s> by explicit vectors."""
    sigma = (qsim.PAULI_I, qsim.PAULI_X, qsim.PAULI_Z,
             qsim.PAULI_X @ qsim.PAULI_Z)[s]
    bell = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    bs = np.kron(sigma, np.eye(2)) @ bell
    joint = np.kron(rho_ai.matrix, rho_c.matrix)
    return float(np.real(bs.conj() @ joint @ bs))


def pauli_block_oracle(mat: np.ndarray) -> dict:
    """Solve the 16-dim linear system for the Pauli-basis blocks; no partial trace."""
    paulis = {"0": qsim.PAULI_I, "x": qsim.PAULI_X, "y": qsim.PAULI_Y, "z": qsim.PAULI_Z}
    basis, names = [], []
    for pname, p in paulis.items():
        for qname, q in paulis.items():
            basis.append(np.kron(p, q).reshape(-1))
            names.append((pname, qname))
    coeffs = np.linalg.solve(np.array(basis).T, mat.reshape(-1))
    blocks = {k: np.zeros((2, 2), dtype=complex) for k in paulis}
    for (pname, qname), c in zip(names, coeffs):
        blocks[pname] += c * paulis[qname]
    return blocks


class TestConditionalProb:
    def test_aligned_zero_states(self):
        rho0 = DensityOperator.zero_state(1)
        assert conditional_prob(rho0, rho0, 0) == pytest.approx(0.5, abs=1e-15)

    def test_orthogonal_states(self):
        rho0 = DensityOperator.zero_state(1)
        rho1 = qsim.pauli_eigenstate(Axis.Z, 1).to_density()
        assert conditional_prob(rho0, rho1, 0) == pytest.approx(0.0, abs=1e-15)

    def test_matches_inner_product_oracle(self, rng):
        for _ in range(25):
            rho_c = qsim.random_density(1, rng)
            rho_ai = qsim.random_density(1, rng)
            for s in range(4):
                value = conditional_prob(rho_c, rho_ai, s)
                assert value == pytest.approx(
                    bell_inner_product_oracle(rho_c, rho_ai, s), abs=1e-12)

    def test_completeness_over_outcomes(self, rng):
        for _ in range(100):
            rho_c = qsim.random_density(1, rng)
            rho_ai = qsim.random_density(1, rng)
            total = sum(conditional_prob(rho_c, rho_ai, s) for s in range(4))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_both_formulas_agree(self, rng):
        # conditional_prob raises if the projector and transposed-sigma forms
        # disagree beyond 1e-10; exercise that cross-check densely
        for _ in range(100):
            conditional_prob(qsim.random_density(1, rng), qsim.random_density(1, rng),
                             int(rng.integers(4)))


class TestForgedTeleportation:
    def test_basis_state(self):
        rho = DensityOperator.zero_state(1)
        out = forged_teleportation(rho)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-12)

    def test_plus_state(self):
        rho = qsim.pauli_eigenstate(Axis.X, 0).to_density()
        out = forged_teleportation(rho)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-12)

    def test_identity_channel_random_states_all_outcomes(self, rng):
        for _ in range(50):
            psi = qsim.random_pure(1, rng)
            rho = psi.to_density()
            for s0 in (0, 1, 2, 3):
                out = forged_teleportation(rho, s0=s0)
                assert qsim.fidelity_pure_mixed(psi, out) >= 1 - 1e-10

    def test_summed_variant_and_mixed_states(self, rng):
        for _ in range(20):
            rho = qsim.random_density(1, rng)
            out = forged_teleportation(rho, s0=None)
            np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-10)

    def test_works_with_schmidt_decomposition_of_bell(self):
        decomp = forging.forge_schmidt(
            forging.SchmidtForm((1 / math.sqrt(2), 1 / math.sqrt(2))))
        rho = qsim.pauli_eigenstate(Axis.Y, 0).to_density()
        out = forged_teleportation(rho, decomp=decomp)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-10)


class TestQstEquivalence:
    def test_zero_state(self):
        np.testing.assert_allclose(qst_equivalence(DensityOperator.zero_state(1)),
                                   [0, 0, 1], atol=1e-12)

    def test_y_eigenstate_transpose_handling(self):
        rho = qsim.pauli_eigenstate(Axis.Y, 0).to_density()
        np.testing.assert_allclose(qst_equivalence(rho), [0, 1, 0], atol=1e-12)

    def test_maximally_mixed(self):
        np.testing.assert_allclose(qst_equivalence(DensityOperator.maximally_mixed(1)),
                                   [0, 0, 0], atol=1e-15)

    def test_matches_direct_expectations(self, rng):
        for _ in range(25):
            rho = qsim.random_density(1, rng)
            bloch = qst_equivalence(rho)
            direct = [np.real(np.trace(p @ rho.matrix))
                      for p in (qsim.PAULI_X, qsim.PAULI_Y, qsim.PAULI_Z)]
            np.testing.assert_allclose(bloch, direct, atol=1e-10)


class TestPauliExpand:
    def test_cnot_blocks(self):
        exp = pauli_expand(qsim.cnot(0, 1))
        np.testing.assert_allclose(exp.u0, (qsim.PAULI_I + qsim.PAULI_X) / 2, atol=1e-15)
        np.testing.assert_allclose(exp.uz, (qsim.PAULI_I - qsim.PAULI_X) / 2, atol=1e-15)
        assert np.linalg.norm(exp.ux) < 1e-15
        assert np.linalg.norm(exp.uy) < 1e-15

    def test_cz_blocks(self):
        exp = pauli_expand(qsim.cz(0, 1))
        np.testing.assert_allclose(exp.u0, (qsim.PAULI_I + qsim.PAULI_Z) / 2, atol=1e-15)
        np.testing.assert_allclose(exp.uz, (qsim.PAULI_I - qsim.PAULI_Z) / 2, atol=1e-15)

    def test_swap_has_x_block(self):
        exp = pauli_expand(qsim.swap(0, 1))
        assert np.linalg.norm(exp.ux) > 0.1

    def test_matches_linear_system_oracle(self, rng):
        for _ in range(10):
            mat = qsim.random_unitary(4, rng)
            exp = pauli_expand(mat)
            oracle = pauli_block_oracle(mat)
            np.testing.assert_allclose(exp.u0, oracle["0"], atol=1e-12)
            np.testing.assert_allclose(exp.ux, oracle["x"], atol=1e-12)
            np.testing.assert_allclose(exp.uy, oracle["y"], atol=1e-12)
            np.testing.assert_allclose(exp.uz, oracle["z"], atol=1e-12)

    def test_reassembly(self, rng):
        mat = qsim.random_unitary(4, rng)
        np.testing.assert_allclose(pauli_expand(mat).reassemble(), mat, atol=1e-12)


class TestTeleportability:
    def test_standard_gates(self):
        assert is_teleportable(qsim.cnot(0, 1))
        assert is_teleportable(qsim.cz(0, 1))
        assert is_teleportable(qsim.crz(math.pi / 3, 0, 1))
        assert not is_teleportable(qsim.swap(0, 1))

    def test_witness_carries_norms(self):
        witness = is_teleportable(qsim.swap(0, 1))
        assert witness.ux_norm == pytest.approx(1 / math.sqrt(2), abs=1e-12)
        assert witness.uy_norm == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_controlled_unitaries_always_pass(self, rng):
        for _ in range(20):
            gate = qsim.controlled(qsim.random_unitary(2, rng), 0, 1)
            witness = is_teleportable(gate)
            assert witness.ux_norm < 1e-12 and witness.uy_norm < 1e-12

    def test_control_frame_conjugation(self, rng):
        # X-controlled phase: teleportable only in the Hadamard control frame
        base = qsim.crz(0.8, 0, 1).matrix
        h = qsim.h(0).matrix
        rotated = np.kron(h, np.eye(2)) @ base @ np.kron(h.conj().T, np.eye(2))
        assert not is_teleportable(rotated)
        assert is_teleportable(rotated, control_frame=h)

    def test_random_unitaries_fail(self, rng):
        for _ in range(10):
            assert not is_teleportable(qsim.gate_from_matrix(qsim.random_unitary(4, rng), (0, 1)))


class TestGateTeleport:
    def test_cnot_on_plus_zero_gives_bell(self):
        plus = qsim.pauli_eigenstate(Axis.X, 0)
        zero = PureState.zero(1)
        result = gate_teleport(qsim.cnot(0, 1), plus, zero)
        s = 1 / math.sqrt(2)
        for branch in (result.branch_plus, result.branch_minus):
            assert qsim.fidelity_pure(PureState(np.array([s, 0, 0, s])), branch) == \
                pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("gate", [qsim.cnot(0, 1), qsim.cz(0, 1),
                                      qsim.crz(math.pi / 3, 0, 1)])
    def test_teleportable_gates_20_seeds(self, gate):
        rng = np.random.default_rng(11)
        for _ in range(20):
            result = gate_teleport(gate, qsim.random_pure(1, rng), qsim.random_pure(1, rng))
            assert result.fidelity_plus >= 1 - 1e-10
            assert result.fidelity_minus >= 1 - 1e-10
            assert result.mismatch_norm < 1e-10

    def test_swap_rejected_then_forced(self, rng):
        with pytest.raises(NonTeleportableGateError) as err:
            gate_teleport(qsim.swap(0, 1), qsim.random_pure(1, rng), qsim.random_pure(1, rng))
        assert err.value.witness.ux_norm > 0.1
        result = gate_teleport(qsim.swap(0, 1), qsim.random_pure(1, rng),
                               qsim.random_pure(1, rng), force=True)
        assert result.mismatch_norm > 0.1

    def test_branch_agreement_iff_teleportable(self, rng):
        gates = [qsim.cnot(0, 1), qsim.cz(0, 1), qsim.crz(1.3, 0, 1), qsim.swap(0, 1)]
        gates += [qsim.gate_from_matrix(qsim.random_unitary(4, rng), (0, 1))
                  for _ in range(5)]
        for gate in gates:
            result = gate_teleport(gate, qsim.random_pure(1, rng),
                                   qsim.random_pure(1, rng), force=True)
            if is_teleportable(gate):
                assert result.mismatch_norm < 1e-10
            else:
                assert result.mismatch_norm > 1e-3

    def test_forged_mode_consumes_forged_pair(self, rng):
        for gate in (qsim.cnot(0, 1), qsim.crz(0.9, 0, 1)):
            result = gate_teleport(gate, qsim.random_pure(1, rng),
                                   qsim.random_pure(1, rng), forged=True)
            assert result.fidelity_plus >= 1 - 1e-10
            assert result.fidelity_minus >= 1 - 1e-10
            assert isinstance(result.branch_plus, DensityOperator)
            # each branch fires with probability 1/2 through the forged pair
            assert result.branch_plus.trace_weight == pytest.approx(0.5, abs=1e-10)
