"""Core simulator checks against independent dense-matrix oracles."""

import numpy as np
import pytest

from forgecut import qsim
from forgecut.qsim import Axis, DensityOperator, ProjectorSpec, PureState

from conftest import kron_embed


class TestEigenstatesAndGates:
    def test_computational_basis(self):
        np.testing.assert_array_equal(qsim.pauli_eigenstate(Axis.Z, 0).amplitudes, [1, 0])
        np.testing.assert_array_equal(qsim.pauli_eigenstate(Axis.Z, 1).amplitudes, [0, 1])

    def test_hadamard_basis(self):
        s = 1 / np.sqrt(2)
        np.testing.assert_allclose(qsim.pauli_eigenstate(Axis.X, 1).amplitudes, [s, -s])

    def test_y_transpose_convention(self):
        # |0_y> conjugated (transposed as a bra) is |1_y>
        zero_y = qsim.pauli_eigenstate(Axis.Y, 0).amplitudes
        one_y = qsim.pauli_eigenstate(Axis.Y, 1).amplitudes
        np.testing.assert_allclose(zero_y.conj(), one_y, atol=1e-15)

    def test_eigenstates_are_pauli_eigenvectors(self):
        for axis in qsim.AXES:
            for outcome in (0, 1):
                vec = qsim.pauli_eigenstate(axis, outcome).amplitudes
                np.testing.assert_allclose(qsim.PAULIS[axis] @ vec, (-1) ** outcome * vec,
                                           atol=1e-15)

    @pytest.mark.parametrize("builder,args", [
        (qsim.x, (0,)), (qsim.y, (0,)), (qsim.z, (0,)), (qsim.h, (0,)),
        (qsim.s, (0,)), (qsim.sdg, (0,)), (qsim.rx, (0.37, 0)), (qsim.ry, (1.1, 0)),
        (qsim.rz, (2.2, 0)), (qsim.cnot, (0, 1)), (qsim.cz, (0, 1)),
        (qsim.swap, (0, 1)), (qsim.crz, (0.9, 0, 1)),
    ])
    def test_named_gates_unitary(self, builder, args):
        gate = builder(*args)
        dim = 2**gate.arity
        np.testing.assert_allclose(gate.matrix.conj().T @ gate.matrix, np.eye(dim),
                                   atol=1e-12)

    def test_non_unitary_rejected(self):
        with pytest.raises(qsim.GateError):
            qsim.UnitaryGate(np.array([[1, 0], [0, 2]]), (0,))

    def test_target_out_of_range(self):
        state = PureState.zero(2)
        with pytest.raises(qsim.GateError):
            qsim.apply_unitary(state, qsim.x(5))


class TestApplyUnitary:
    def test_x_flips(self):
        out = qsim.apply_unitary(PureState.zero(1), qsim.x(0))
        np.testing.assert_allclose(out.amplitudes, [0, 1], atol=1e-15)

    def test_bell_preparation(self):
        state = PureState.zero(2)
        state = qsim.apply_unitary(state, qsim.h(0))
        state = qsim.apply_unitary(state, qsim.cnot(0, 1))
        s = 1 / np.sqrt(2)
        np.testing.assert_allclose(state.amplitudes, [s, 0, 0, s], atol=1e-15)

    def test_unitary_then_inverse_is_identity(self, rng):
        state = qsim.random_pure(3, rng)
        mat = qsim.random_unitary(4, rng)
        gate = qsim.gate_from_matrix(mat, (0, 2))
        inverse = qsim.gate_from_matrix(mat.conj().T, (0, 2))
        out = qsim.apply_unitary(qsim.apply_unitary(state, gate), inverse)
        np.testing.assert_allclose(out.amplitudes, state.amplitudes, atol=1e-12)

    def test_matches_kron_embedding_oracle(self, rng):
        for targets in [(0,), (2,), (0, 1), (2, 0), (1, 3)]:
            n = 4
            mat = qsim.random_unitary(2 ** len(targets), rng)
            state = qsim.random_pure(n, rng)
            out = qsim.apply_unitary(state, qsim.gate_from_matrix(mat, targets))
            expected = kron_embed(mat, targets, n) @ state.amplitudes
            np.testing.assert_allclose(out.amplitudes, expected, atol=1e-12)

    def test_density_application_preserves_trace_and_hermiticity(self, rng):
        for _ in range(5):
            rho = qsim.random_density(3, rng)
            gate = qsim.gate_from_matrix(qsim.random_unitary(4, rng), (0, 2))
            out = qsim.apply_unitary(rho, gate)
            assert abs(out.trace_weight - 1.0) < 1e-12
            np.testing.assert_allclose(out.matrix, out.matrix.conj().T, atol=1e-12)

    def test_density_matches_vector_path(self, rng):
        psi = qsim.random_pure(2, rng)
        gate = qsim.gate_from_matrix(qsim.random_unitary(4, rng), (1, 0))
        via_rho = qsim.apply_unitary(psi.to_density(), gate)
        via_vec = qsim.apply_unitary(psi, gate).to_density()
        np.testing.assert_allclose(via_rho.matrix, via_vec.matrix, atol=1e-12)


class TestProjection:
    def test_z_projection_of_zero_state(self):
        rho = DensityOperator.zero_state(1)
        out, prob = qsim.project(rho, ProjectorSpec(Axis.Z, 0, 0))
        assert prob == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(out.matrix, rho.matrix, atol=1e-15)

    def test_x_projection_overlap_half(self):
        rho = DensityOperator.zero_state(1)
        out, prob = qsim.project(rho, ProjectorSpec(Axis.X, 0, 0))
        assert prob == pytest.approx(0.5, abs=1e-15)
        assert out.trace_weight == pytest.approx(0.5, abs=1e-15)

    def test_orthogonal_projection_zero(self):
        rho = qsim.pauli_eigenstate(Axis.Y, 0).to_density()
        _, prob = qsim.project(rho, ProjectorSpec(Axis.Y, 1, 0))
        assert prob == pytest.approx(0.0, abs=1e-15)

    def test_completeness_over_outcomes(self, rng):
        for _ in range(10):
            rho = qsim.random_density(2, rng)
            for axis in qsim.AXES:
                total = sum(qsim.project(rho, ProjectorSpec(axis, o, 1))[1] for o in (0, 1))
                assert total == pytest.approx(1.0, abs=1e-12)


class TestPartialTrace:
    def test_bell_marginal_is_maximally_mixed(self):
        s = 1 / np.sqrt(2)
        bell = PureState(np.array([s, 0, 0, s])).to_density()
        reduced = qsim.partial_trace(bell, [0])
        np.testing.assert_allclose(reduced.matrix, np.eye(2) / 2, atol=1e-15)

    def test_product_state_recovers_factor(self, rng):
        for na, nb in [(1, 1), (2, 1), (2, 3), (3, 3)]:
            rho_a = qsim.random_density(na, rng)
            rho_b = qsim.random_density(nb, rng)
            joint = rho_a.tensor(rho_b)
            reduced = qsim.partial_trace(joint, range(na))
            np.testing.assert_allclose(reduced.matrix, rho_a.matrix, atol=1e-12)

    def test_ghz_two_qubit_marginal(self):
        # independent oracle: direct matrix computation of the GHZ marginal
        amps = np.zeros(8, dtype=complex)
        amps[0] = amps[7] = 1 / np.sqrt(2)
        ghz = PureState(amps).to_density()
        # row axes (q2,q1,q0), col axes (q2,q1,q0); contract the q2 pair
        expected = np.einsum("abcaef->bcef", ghz.matrix.reshape(2, 2, 2, 2, 2, 2))
        expected = expected.reshape(4, 4)
        reduced = qsim.partial_trace(ghz, [0, 1])
        np.testing.assert_allclose(reduced.matrix, expected, atol=1e-15)
        direct = np.zeros((4, 4))
        direct[0, 0] = direct[3, 3] = 0.5
        np.testing.assert_allclose(reduced.matrix, direct, atol=1e-15)

    def test_keep_order_relabels(self, rng):
        rho_a = qsim.random_density(1, rng)
        rho_b = qsim.random_density(1, rng)
        joint = rho_a.tensor(rho_b)
        swapped = qsim.partial_trace(joint, [1, 0])
        np.testing.assert_allclose(swapped.matrix, rho_b.tensor(rho_a).matrix, atol=1e-12)

    def test_empty_keep_rejected(self):
        with pytest.raises(qsim.StateError):
            qsim.partial_trace(DensityOperator.zero_state(2), [])


class TestExpectation:
    def test_z_on_zero(self):
        assert qsim.expectation(DensityOperator.zero_state(1), qsim.PAULI_Z) == pytest.approx(1.0)

    def test_bell_correlators(self):
        s = 1 / np.sqrt(2)
        bell = PureState(np.array([s, 0, 0, s])).to_density()
        zz = np.kron(qsim.PAULI_Z, qsim.PAULI_Z)
        yy = np.kron(qsim.PAULI_Y, qsim.PAULI_Y)
        # direct matrix-trace oracle
        assert np.real(np.trace(zz @ bell.matrix)) == pytest.approx(1.0)
        assert qsim.expectation(bell, zz) == pytest.approx(1.0, abs=1e-12)
        assert qsim.expectation(bell, yy) == pytest.approx(-1.0, abs=1e-12)

    def test_x_on_maximally_mixed(self):
        assert qsim.expectation(DensityOperator.maximally_mixed(1), qsim.PAULI_X) == \
            pytest.approx(0.0, abs=1e-15)

    def test_linearity(self, rng):
        rho = qsim.random_density(2, rng)
        o1 = qsim.random_unitary(4, rng)
        o1 = o1 + o1.conj().T
        o2 = qsim.random_unitary(4, rng)
        o2 = o2 + o2.conj().T
        a, b = 0.7, -1.3
        lhs = qsim.expectation(rho, a * o1 + b * o2)
        rhs = a * qsim.expectation(rho, o1) + b * qsim.expectation(rho, o2)
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_subset_targets(self, rng):
        rho = qsim.random_density(3, rng)
        val = qsim.expectation(rho, qsim.PAULI_Z, targets=[1])
        oracle = np.real(np.trace(kron_embed(qsim.PAULI_Z, (1,), 3) @ rho.matrix))
        assert val == pytest.approx(oracle, abs=1e-12)

    def test_normalized_mode(self, rng):
        rho = qsim.random_density(1, rng)
        sub = DensityOperator._trusted(0.25 * rho.matrix)
        raw = qsim.expectation(sub, qsim.PAULI_Z)
        norm = qsim.expectation(sub, qsim.PAULI_Z, normalized=True)
        assert norm == pytest.approx(raw / 0.25, abs=1e-12)

    def test_non_hermitian_rejected(self):
        with pytest.raises(qsim.StateError):
            qsim.expectation(DensityOperator.zero_state(1), np.array([[0, 1], [0, 0]]))


class TestStateValidation:
    def test_norm_enforced(self):
        with pytest.raises(qsim.StateError):
            PureState(np.array([1.0, 1.0]))

    def test_nan_rejected(self):
        with pytest.raises(qsim.StateError):
            PureState(np.array([np.nan, 0.0]))

    def test_hermiticity_enforced(self):
        with pytest.raises(qsim.StateError):
            DensityOperator(np.array([[0.5, 1.0], [0.0, 0.5]]))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(qsim.StateError):
            DensityOperator(np.array([[1.5, 0], [0, -0.5]]))

    def test_trace_bound(self):
        with pytest.raises(qsim.StateError):
            DensityOperator(np.eye(2))


class TestMeasureAndPermute:
    def test_measure_statistics(self, rng):
        state = qsim.apply_unitary(PureState.zero(1), qsim.h(0))
        counts = [qsim.measure_pure(state, 0, Axis.Z, rng)[0] for _ in range(2000)]
        assert abs(np.mean(counts) - 0.5) < 5 * np.sqrt(0.25 / 2000)

    def test_measure_collapse(self, rng):
        state = qsim.apply_unitary(PureState.zero(1), qsim.h(0))
        outcome, collapsed, prob = qsim.measure_pure(state, 0, Axis.X, rng)
        assert outcome == 0 and prob == pytest.approx(1.0, abs=1e-12)
        assert qsim.fidelity_pure(collapsed, qsim.pauli_eigenstate(Axis.X, 0)) == \
            pytest.approx(1.0, abs=1e-12)

    def test_permute_round_trip(self, rng):
        state = qsim.random_pure(3, rng)
        perm = [2, 0, 1]
        inverse = [perm.index(q) for q in range(3)]
        back = qsim.permute_qubits(qsim.permute_qubits(state, perm), inverse)
        np.testing.assert_allclose(back.amplitudes, state.amplitudes, atol=1e-15)

    def test_permute_moves_factor(self, rng):
        a = qsim.random_pure(1, rng)
        b = qsim.random_pure(1, rng)
        joint = a.tensor(b)
        swapped = qsim.permute_qubits(joint, [1, 0])
        np.testing.assert_allclose(swapped.amplitudes, b.tensor(a).amplitudes, atol=1e-15)
