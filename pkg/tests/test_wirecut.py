"""Wire cutting: identity forging, branches, and exact recombination vs oracle."""

import itertools

import numpy as np
import pytest

from forgecut import circuit, qsim, wirecut
from forgecut.circuit import CutPlan, LocalLayer, NonlocalGate, PartitionedCircuit, split_local
from forgecut.observables import PauliObservable
from forgecut.qsim import Axis, DensityOperator
from forgecut.wirecut import (LABELS, MissingBranchError, WirecutError, alice_branch,
                              bob_branch, cut_exact, enumerate_branches, forged_identity,
                              recombine_exact, recombine_expectation, transition_entry,
                              transition_matrix)

from conftest import bell_circuit


class TestForgedIdentity:
    def test_zero_state(self):
        rho = DensityOperator.zero_state(1)
        np.testing.assert_allclose(forged_identity(rho).matrix, rho.matrix, atol=1e-12)

    def test_plus_state(self):
        rho = qsim.pauli_eigenstate(Axis.X, 0).to_density()
        np.testing.assert_allclose(forged_identity(rho).matrix, rho.matrix, atol=1e-12)

    def test_y_state_needs_the_z_conjugation(self):
        rho = qsim.pauli_eigenstate(Axis.Y, 0).to_density()  # (I + Y)/2
        np.testing.assert_allclose(forged_identity(rho).matrix, rho.matrix, atol=1e-12)

    def test_200_random_states(self, rng):
        for i in range(200):
            if i % 10 == 0:
                rho = qsim.random_density(1, rng, rank=1)
            elif i % 10 == 1:
                rho = DensityOperator.maximally_mixed(1)
            else:
                rho = qsim.random_density(1, rng)
            np.testing.assert_allclose(forged_identity(rho).matrix, rho.matrix, atol=1e-12)


class TestTransitionMatrix:
    def test_formula_values(self):
        assert transition_entry(0, Axis.Z, 0, Axis.Z) == 1
        assert transition_entry(0, Axis.Y, 0, Axis.Y) == 0
        assert transition_entry(1, Axis.Y, 0, Axis.Y) == -1
        assert transition_entry(0, Axis.X, 0, Axis.Z) == 0

    def test_structure(self):
        mat = transition_matrix()
        assert np.count_nonzero(mat) == 6
        # block diagonal in axis; LABELS order is x pair, y pair, z pair
        x_block = mat[0:2, 0:2]
        y_block = mat[2:4, 2:4]
        z_block = mat[4:6, 4:6]
        np.testing.assert_array_equal(x_block, np.eye(2, dtype=int))
        np.testing.assert_array_equal(z_block, np.eye(2, dtype=int))
        np.testing.assert_array_equal(y_block, -np.array([[0, 1], [1, 0]]))
        off_blocks = mat.copy()
        off_blocks[0:2, 0:2] = off_blocks[2:4, 2:4] = off_blocks[4:6, 4:6] = 0
        assert np.count_nonzero(off_blocks) == 0

    def test_matches_formula_everywhere(self):
        mat = transition_matrix()
        for r, (j, beta) in enumerate(LABELS):
            for c, (i, alpha) in enumerate(LABELS):
                assert mat[r, c] == transition_entry(j, beta, i, alpha)


class TestBranches:
    def trivial_circuit(self):
        return PartitionedCircuit(
            1, 1, (NonlocalGate(qsim.gate_from_matrix(np.eye(4), (0, 1), "id4"), 0, 0),))

    def test_alice_trivial_aligned(self):
        alice, _ = split_local(self.trivial_circuit())
        branch = alice_branch(alice, prep=(0, Axis.Z), meas=(0, Axis.Z))
        assert branch.trace_weight == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(branch.state.matrix, [[1, 0], [0, 0]], atol=1e-12)

    def test_alice_trivial_orthogonal(self):
        alice, _ = split_local(self.trivial_circuit())
        branch = alice_branch(alice, prep=(0, Axis.Z), meas=(1, Axis.Z))
        assert branch.trace_weight == pytest.approx(0.0, abs=1e-12)

    def test_alice_trivial_x_overlap(self):
        alice, _ = split_local(self.trivial_circuit())
        branch = alice_branch(alice, prep=(0, Axis.Z), meas=(0, Axis.X))
        assert branch.trace_weight == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(branch.state.matrix, [[0.5, 0], [0, 0]], atol=1e-12)

    def bob_cnot_program(self):
        _, bob = split_local(bell_circuit())
        return bob

    def test_bob_cnot_aligned(self):
        # density-matrix oracle: CNOT|00> = |00>, measuring the control in z
        bob = self.bob_cnot_program()
        branch = bob_branch(bob, prep=(0, Axis.Z), meas=(0, Axis.Z))
        assert branch.trace_weight == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(branch.state.matrix, [[1, 0], [0, 0]], atol=1e-12)

    def test_bob_cnot_flipped(self):
        bob = self.bob_cnot_program()
        branch = bob_branch(bob, prep=(1, Axis.Z), meas=(1, Axis.Z))
        assert branch.trace_weight == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(branch.state.matrix, [[0, 0], [0, 1]], atol=1e-12)

    def test_bob_measurement_completeness(self):
        bob = self.bob_cnot_program()
        for mu in (Axis.X, Axis.Y, Axis.Z):
            total = sum(bob_branch(bob, prep=(0, Axis.X), meas=(k, mu)).trace_weight
                        for k in (0, 1))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_branch_matches_density_oracle(self, rng):
        # independent oracle: dense simulation of prepare -> CNOT -> project -> trace
        bob = self.bob_cnot_program()
        for (j, beta), (k, mu) in itertools.product(LABELS, LABELS):
            prep_vec = qsim._EIGENVECTORS[(beta, j)]
            init = np.kron(np.outer(prep_vec, prep_vec.conj()), np.eye(2) / 1)
            init = np.kron(np.outer(prep_vec, prep_vec.conj()),
                           np.array([[1, 0], [0, 0]], dtype=complex))
            cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
                            dtype=complex)
            # joint little-endian (q_b low, q_d high); cnot matrix is (control, target)
            # big-endian, so embed with control on the high qubit
            full = np.zeros((4, 4), dtype=complex)
            for r in range(4):
                for c in range(4):
                    rr = ((r & 1) << 1) | (r >> 1)
                    cc = ((c & 1) << 1) | (c >> 1)
                    full[r, c] = cnot[rr, cc]
            evolved = full @ init @ full.conj().T
            meas_vec = qsim._EIGENVECTORS[(mu, k)]
            proj = np.kron(np.outer(meas_vec, meas_vec.conj()), np.eye(2))
            projected = proj @ evolved @ proj.conj().T
            oracle = (projected.reshape(2, 2, 2, 2).trace(axis1=0, axis2=2))
            branch = bob_branch(bob, prep=(j, beta), meas=(k, mu))
            np.testing.assert_allclose(branch.state.matrix, oracle, atol=1e-12,
                                       err_msg=f"prep {(j, beta)} meas {(k, mu)}")


class TestRecombination:
    def test_bell_circuit_correlators(self, bell):
        result = cut_exact(bell, observables=["ZZ", "XX", "YY"])
        assert result.expectations["ZZ"] == pytest.approx(1.0, abs=1e-12)
        assert result.expectations["XX"] == pytest.approx(1.0, abs=1e-12)
        assert result.expectations["YY"] == pytest.approx(-1.0, abs=1e-12)
        oracle = circuit.simulate_full(bell).to_density()
        assert qsim.trace_distance(result.state, oracle) < 1e-12

    def test_identity_gate_gives_product_state(self, rng):
        # identity nonlocal gate: output must be the uncut product evolution
        layers = (
            LocalLayer("A", (qsim.gate_from_matrix(qsim.random_unitary(2, rng), (0,)),)),
            LocalLayer("B", (qsim.gate_from_matrix(qsim.random_unitary(2, rng), (0,)),)),
            NonlocalGate(qsim.gate_from_matrix(np.eye(4), (0, 1), "id4"), 0, 0),
            LocalLayer("A", (qsim.gate_from_matrix(qsim.random_unitary(2, rng), (0,)),)),
        )
        circ = PartitionedCircuit(1, 1, layers)
        result = cut_exact(circ)
        oracle = circuit.simulate_full(circ).to_density()
        assert qsim.trace_distance(result.state, oracle) < 1e-12

    def test_random_circuits_20_seeds(self):
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            m = int(rng.integers(1, 3))
            n = int(rng.integers(1, 6 - m - 1)) if m < 4 else 1
            circ = circuit.random_circuit(m, n, 1, rng)
            result = cut_exact(circ)
            oracle = circuit.simulate_full(circ).to_density()
            assert qsim.trace_distance(result.state, oracle) < 1e-10, f"seed {seed}"

    def test_two_gate_collapse(self, rng):
        circ = circuit.random_circuit(2, 2, 2, rng)
        alice, bob = split_local(circ)
        branches_a = enumerate_branches(alice)
        branches_b = enumerate_branches(bob)
        assert len(branches_a) == len(branches_b) == 6**4
        state = recombine_exact(branches_a, branches_b, 2)
        oracle = circuit.simulate_full(circ).to_density()
        assert qsim.trace_distance(state, oracle) < 1e-9

    def test_policies_and_substitutions_agree(self, rng):
        circ = circuit.random_circuit(2, 1, 1, rng)
        plans = [CutPlan("fresh", "relabel"), CutPlan("fresh", "swap"), CutPlan("reuse")]
        states = [cut_exact(circ, plan).state for plan in plans]
        for other in states[1:]:
            assert qsim.trace_distance(states[0], other) < 1e-12

    def test_branches_identical_between_policies(self, rng):
        circ = circuit.random_circuit(1, 1, 1, rng)
        progs = {plan.policy + plan.substitution: split_local(circ, plan)[0]
                 for plan in (CutPlan("fresh", "relabel"), CutPlan("reuse"))}
        for key in itertools.product(LABELS, LABELS):
            states = [wirecut.run_branch(p, [key[0]], [key[1]]).state.matrix
                      for p in progs.values()]
            np.testing.assert_allclose(states[0], states[1], atol=1e-12)

    def test_bob_side_cut(self, rng):
        circ = circuit.random_circuit(2, 1, 1, rng)
        result = cut_exact(circ, CutPlan(side="bob"))
        oracle = circuit.simulate_full(circ).to_density()
        assert qsim.trace_distance(result.state, oracle) < 1e-10

    def test_missing_branch_detected(self, bell):
        alice, bob = split_local(bell)
        branches_a = enumerate_branches(alice)
        branches_b = enumerate_branches(bob)
        del branches_a[((0, Axis.X),), ((0, Axis.X),)]
        with pytest.raises(MissingBranchError):
            recombine_exact(branches_a, branches_b, 1)

    def test_trace_check(self, bell):
        alice, bob = split_local(bell)
        branches_a = enumerate_branches(alice)
        branches_b = enumerate_branches(bob)
        key = next(iter(branches_a))
        broken = dict(branches_a)
        broken[key] = wirecut.BranchState(
            branches_a[key].label,
            DensityOperator._trusted(branches_a[key].state.matrix + 0.5 * np.eye(2)))
        with pytest.raises(WirecutError, match="trace"):
            recombine_exact(broken, branches_b, 1)


class TestRecombineExpectation:
    def test_identity_observable_is_normalization(self, bell):
        alice, bob = split_local(bell)
        branches_a = enumerate_branches(alice)
        branches_b = enumerate_branches(bob)
        obs = PauliObservable.from_spec("II", 2)
        assert recombine_expectation(obs, branches_a, branches_b, 1, 1) == \
            pytest.approx(1.0, abs=1e-12)

    def test_matches_state_expectation(self, rng):
        circ = circuit.random_circuit(2, 2, 1, rng)
        alice, bob = split_local(circ)
        branches_a = enumerate_branches(alice)
        branches_b = enumerate_branches(bob)
        state = recombine_exact(branches_a, branches_b, 1)
        for spec in ("ZZZZ", "XIYI", "IZIX"):
            obs = PauliObservable.from_spec(spec, 4)
            via_branches = recombine_expectation(obs, branches_a, branches_b, 2, 1)
            via_state = obs.expectation_density(state)
            assert via_branches == pytest.approx(via_state, abs=1e-10)

    def test_sum_of_products(self, bell):
        from forgecut.observables import ObservableSum
        alice, bob = split_local(bell)
        branches_a = enumerate_branches(alice)
        branches_b = enumerate_branches(bob)
        obs = ObservableSum(((0.5, PauliObservable.from_spec("ZZ", 2)),
                             (0.5, PauliObservable.from_spec("XX", 2))))
        assert recombine_expectation(obs, branches_a, branches_b, 1, 1) == \
            pytest.approx(1.0, abs=1e-12)

    def test_non_product_rejected(self, bell):
        alice, bob = split_local(bell)
        with pytest.raises(WirecutError, match="sum of products"):
            recombine_expectation(np.eye(4), enumerate_branches(alice),
                                  enumerate_branches(bob), 1, 1)


class TestCompleteness:
    def test_branch_trace_completeness_per_axis(self, rng):
        circ = circuit.random_circuit(2, 1, 1, rng)
        alice, _ = split_local(circ)
        for alpha in (Axis.X, Axis.Y, Axis.Z):
            for prep in LABELS:
                total = sum(
                    wirecut.run_branch(alice, [(i, alpha)], [prep]).trace_weight
                    for i in (0, 1))
                assert total == pytest.approx(1.0, abs=1e-12)


class TestConfigDistribution:
    def test_consistent_with_branches(self, bell):
        alice, _ = split_local(bell)
        obs = PauliObservable.from_spec("Z", 1)
        for alpha in (Axis.X, Axis.Y, Axis.Z):
            for prep in LABELS:
                dist = wirecut.config_distribution(alice, [alpha], [prep], obs)
                assert dist.sum() == pytest.approx(1.0, abs=1e-12)
                for i in (0, 1):
                    branch = wirecut.run_branch(alice, [(i, alpha)], [prep])
                    block = dist[i * 2:(i + 1) * 2]
                    assert block.sum() == pytest.approx(branch.trace_weight, abs=1e-12)
