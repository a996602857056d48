"""State teleportation over forged Bell pairs, and gate teleportation.

Bell outcome convention (the literature fixes only s = 0):

    s   measured Bell state        correction on the receiving qubit
    0   (|00> + |11>)/sqrt(2)      I
    1   (|01> + |10>)/sqrt(2)      X
    2   (|00> - |11>)/sqrt(2)      Z
    3   (|01> - |10>)/sqrt(2)      XZ

The outcome-s projector is |B_s><B_s| with |B_s> = (I ⊗ sigma_s)|B+>, the
sigma acting on the resource-pair half; probabilities then satisfy

    p(s|i) = Tr(Pi_s  rho_C ⊗ rho_Ai) = Tr(rho_Ai^T sigma_s rho_C sigma_s†)/2

(both forms are evaluated and cross-checked; all four sigmas are real, which
the transpose identity requires). The factor 1/2 belongs to the rank-1
projector normalization.

Gate teleportation applies a two-qubit gate through an entangled auxiliary:
the starting process turns the control state a|0> + b|1> into a|00> + b|11>,
the gate acts on (auxiliary, target), and the ending process measures the
auxiliary in x and applies Z to the control on the minus outcome. Writing
the gate as sum_i sigma_i ⊗ U_i over the auxiliary factor, both measurement
branches reproduce the direct gate action exactly when U_x = U_y = 0, i.e.
for gates that are block-diagonal in some control frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qsim
from .forging import QuasiDecomposition, forge_bell, materialize
from .qsim import Axis, DensityOperator, PureState, UnitaryGate

_BELL_PLUS = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2.0)
_SIGMAS = (qsim.PAULI_I, qsim.PAULI_X, qsim.PAULI_Z, qsim.PAULI_X @ qsim.PAULI_Z)
_SIGMA_NAMES = ("I", "X", "Z", "XZ")


class TeleportError(ValueError):
    """Teleportation protocol misuse or internal inconsistency."""


class NonTeleportableGateError(TeleportError):
    """Gate fails the U_x = U_y = 0 condition; carries the witness."""

    def __init__(self, witness: "TeleportabilityWitness"):
        self.witness = witness
        super().__init__(f"gate is not teleportable: {witness}")


@dataclass(frozen=True)
class BellOutcome:
    """Bell measurement outcome index with its correction unitary."""

    s: int

    def __post_init__(self):
        if self.s not in (0, 1, 2, 3):
            raise TeleportError(f"Bell outcome must be 0..3, got {self.s}")

    @property
    def correction(self) -> np.ndarray:
        return _SIGMAS[self.s]

    @property
    def name(self) -> str:
        return _SIGMA_NAMES[self.s]

    def projector(self) -> np.ndarray:
        """|B_s><B_s| on (payload qubit 0, resource-half qubit 1)."""
        vec = np.kron(self.correction, qsim.PAULI_I) @ _BELL_PLUS
        return np.outer(vec, vec.conj())


def conditional_prob(rho_c: DensityOperator, rho_ai: DensityOperator, s: BellOutcome | int) -> float:
    """p(s|i): Bell-projector trace, cross-checked against the transposed-sigma form."""
    outcome = s if isinstance(s, BellOutcome) else BellOutcome(s)
    if rho_c.num_qubits != 1 or rho_ai.num_qubits != 1:
        raise TeleportError("conditional_prob takes single-qubit states")
    joint = np.kron(rho_ai.matrix, rho_c.matrix)  # C on low qubit, A-half on high
    via_projector = float(np.real(np.trace(outcome.projector() @ joint)))
    sigma = outcome.correction
    via_transpose = 0.5 * float(np.real(np.trace(
        rho_ai.matrix.T @ sigma @ rho_c.matrix @ sigma.conj().T)))
    if abs(via_projector - via_transpose) > 1e-10:
        raise TeleportError(
            f"p(s|i) formulas disagree: {via_projector} vs {via_transpose}")
    return via_projector


def forged_teleportation(rho_c: DensityOperator, decomp: QuasiDecomposition | None = None,
                         s0: BellOutcome | int | None = 0) -> DensityOperator:
    """Transport a single-qubit state through a forged Bell pair.

    The receiving side's state is sum_i x_i p(s0|i) sigma_s0 rho_Bi sigma_s0†,
    normalized. With ``s0=None`` all four outcomes are summed (the variant
    that consumes every measurement record instead of postselecting one).
    """
    decomp = decomp if decomp is not None else forge_bell()
    outcomes = [BellOutcome(int(s0.s if isinstance(s0, BellOutcome) else s0))] if s0 is not None \
        else [BellOutcome(s) for s in range(4)]
    acc = np.zeros((2, 2), dtype=complex)
    for outcome in outcomes:
        sigma = outcome.correction
        for term in decomp.terms:
            p = conditional_prob(rho_c, materialize(term.state_a), outcome)
            rho_b = materialize(term.state_b).matrix
            acc += term.coefficient * p * (sigma @ rho_b @ sigma.conj().T)
    weight = float(np.real(np.trace(acc)))
    if weight <= 1e-12:
        raise TeleportError("zero total weight; cannot normalize the transported state")
    return DensityOperator._trusted(acc / weight)


def qst_equivalence(rho_c: DensityOperator) -> np.ndarray:
    """Bloch vector of rho_c recovered purely from the six p(0|i_alpha) values.

    The y components enter through transposed projectors (|0_y><0_y|^T is the
    opposite eigenstate), so the y difference flips sign relative to x and z.
    """
    decomp = forge_bell()
    probs = {}
    for term in decomp.terms:
        label = term.state_a
        probs[(label.axis, label.outcome)] = conditional_prob(
            rho_c, materialize(label), BellOutcome(0))
    rx = 2.0 * (probs[(Axis.X, 0)] - probs[(Axis.X, 1)])
    ry = 2.0 * (probs[(Axis.Y, 1)] - probs[(Axis.Y, 0)])
    rz = 2.0 * (probs[(Axis.Z, 0)] - probs[(Axis.Z, 1)])
    return np.array([rx, ry, rz])


# ---------------------------------------------------------------------------
# gate teleportation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PauliBlockExpansion:
    """Operator blocks of a two-qubit gate over the Pauli basis of its first factor."""

    u0: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    uz: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {"0": self.u0, "x": self.ux, "y": self.uy, "z": self.uz}

    def reassemble(self) -> np.ndarray:
        paulis = (qsim.PAULI_I, qsim.PAULI_X, qsim.PAULI_Y, qsim.PAULI_Z)
        return sum(np.kron(p, b) for p, b in zip(paulis, (self.u0, self.ux, self.uy, self.uz)))


def pauli_expand(gate: UnitaryGate | np.ndarray) -> PauliBlockExpansion:
    """U_i = Tr_first[(sigma_i ⊗ I) U] / 2; reassembly reproduces the gate."""
    mat = gate.matrix if isinstance(gate, UnitaryGate) else np.asarray(gate, dtype=complex)
    if mat.shape != (4, 4):
        raise TeleportError("pauli_expand takes a 4x4 matrix")
    blocks = mat.reshape(2, 2, 2, 2)  # [first_out, second_out, first_in, second_in]
    out = []
    for sigma in (qsim.PAULI_I, qsim.PAULI_X, qsim.PAULI_Y, qsim.PAULI_Z):
        out.append(0.5 * np.einsum("ba,aibj->ij", sigma, blocks))
    return PauliBlockExpansion(*out)


@dataclass(frozen=True)
class TeleportabilityWitness:
    """Verdict plus the offending block norms (Frobenius)."""

    teleportable: bool
    ux_norm: float
    uy_norm: float
    tol: float

    def __bool__(self) -> bool:
        return self.teleportable

    def __str__(self) -> str:
        return (f"|U_x| = {self.ux_norm:.3e}, |U_y| = {self.uy_norm:.3e} "
                f"(tolerance {self.tol:g})")


def is_teleportable(gate: UnitaryGate | np.ndarray, tol: float = 1e-10,
                    control_frame: np.ndarray | None = None) -> TeleportabilityWitness:
    """Check U_x = U_y = 0 in the raw control basis.

    ``control_frame`` conjugates the control factor first, for gates of the
    form I ⊗ U_0 + (W sigma_z W†) ⊗ U_z with a known frame W; no search over
    frames is performed.
    """
    mat = gate.matrix if isinstance(gate, UnitaryGate) else np.asarray(gate, dtype=complex)
    if control_frame is not None:
        w = np.asarray(control_frame, dtype=complex)
        mat = np.kron(w.conj().T, qsim.PAULI_I) @ mat @ np.kron(w, qsim.PAULI_I)
    expansion = pauli_expand(mat)
    ux = float(np.linalg.norm(expansion.ux))
    uy = float(np.linalg.norm(expansion.uy))
    return TeleportabilityWitness(ux <= tol and uy <= tol, ux, uy, tol)


@dataclass(frozen=True)
class GateTeleportResult:
    """Both measurement branches of a teleported gate plus diagnostics."""

    branch_plus: PureState | DensityOperator
    branch_minus: PureState | DensityOperator
    expected: PureState
    fidelity_plus: float
    fidelity_minus: float
    mismatch_norm: float
    witness: TeleportabilityWitness


def _ideal_branches(gate: UnitaryGate, psi_in: PureState, psi_t: PureState) -> tuple[PureState, PureState]:
    # register: control = qubit 0, auxiliary = qubit 1, target = qubit 2
    alpha, beta = psi_in.amplitudes
    start = np.zeros(4, dtype=complex)
    start[0b00] = alpha
    start[0b11] = beta
    state = PureState(np.kron(psi_t.amplitudes, start), subnormalized=True)
    state = qsim.apply_unitary(state, gate.on(1, 2))
    tensor = state.amplitudes.reshape(2, 2, 2)  # axes: target, auxiliary, control
    branches = []
    for outcome in (0, 1):
        bra = qsim._EIGENVECTORS[(Axis.X, outcome)].conj()
        amps = np.einsum("a,tac->tc", bra, tensor).reshape(-1) * math.sqrt(2.0)
        branches.append(amps if outcome == 0 else _feedback_z(amps))
    return (PureState(branches[0], subnormalized=True),
            PureState(branches[1], subnormalized=True))


def _feedback_z(amps: np.ndarray) -> np.ndarray:
    return qsim._apply_vec(amps, qsim.PAULI_Z, (0,), 2)


def _forged_branches(gate: UnitaryGate, psi_in: PureState, psi_t: PureState,
                     decomp: QuasiDecomposition) -> tuple[DensityOperator, DensityOperator]:
    # register: control 0, starting-measure half 1, auxiliary 2, target 3
    plus = np.zeros((4, 4), dtype=complex)
    minus = np.zeros((4, 4), dtype=complex)
    for term in decomp.terms:
        rho = (psi_in.to_density()
               .tensor(materialize(term.state_a))
               .tensor(materialize(term.state_b))
               .tensor(psi_t.to_density()))
        rho = qsim.apply_unitary(rho, qsim.cnot(0, 1))
        started = np.zeros_like(rho.matrix)
        for m in (0, 1):
            branch, _ = qsim.project(rho, qsim.ProjectorSpec(Axis.Z, m, 1))
            if m == 1:
                branch = qsim.apply_unitary(branch, qsim.x(2))
            started += branch.matrix
        evolved = qsim.apply_unitary(DensityOperator._trusted(started), gate.on(2, 3))
        for outcome, acc in ((0, plus), (1, minus)):
            branch, _ = qsim.project(evolved, qsim.ProjectorSpec(Axis.X, outcome, 2))
            if outcome == 1:
                branch = qsim.apply_unitary(branch, qsim.z(0))
            reduced = qsim.partial_trace(branch, (0, 3))
            acc += term.coefficient * reduced.matrix
    return DensityOperator._trusted(plus), DensityOperator._trusted(minus)


def gate_teleport(gate: UnitaryGate, psi_in: PureState, psi_t: PureState, *,
                  forged: bool = False, decomp: QuasiDecomposition | None = None,
                  force: bool = False, tol: float = 1e-10) -> GateTeleportResult:
    """Teleport a two-qubit gate; returns both measurement branches.

    Non-teleportable gates raise :class:`NonTeleportableGateError` unless
    ``force=True``, in which case the run proceeds and the diagnostic lives in
    the result (branches then genuinely differ). ``forged=True`` realizes the
    starting process through a forged Bell pair (default :func:`forge_bell`),
    consuming one pair; branches come back as signed-sum density operators.
    """
    if psi_in.num_qubits != 1 or psi_t.num_qubits != 1:
        raise TeleportError("gate_teleport takes single-qubit input and target states")
    witness = is_teleportable(gate, tol)
    if not witness and not force:
        raise NonTeleportableGateError(witness)

    expected = qsim.apply_unitary(psi_in.tensor(psi_t), gate.on(0, 1))
    if forged:
        plus, minus = _forged_branches(gate, psi_in, psi_t, decomp or forge_bell())
        norm_plus = plus.normalized() if plus.trace_weight > 1e-12 else plus
        norm_minus = minus.normalized() if minus.trace_weight > 1e-12 else minus
        fid_plus = qsim.fidelity_pure_mixed(expected, norm_plus)
        fid_minus = qsim.fidelity_pure_mixed(expected, norm_minus)
        mismatch = float(np.linalg.norm(norm_plus.matrix - norm_minus.matrix))
        return GateTeleportResult(plus, minus, expected, fid_plus, fid_minus, mismatch, witness)

    plus, minus = _ideal_branches(gate, psi_in, psi_t)

    def branch_fidelity(branch: PureState) -> float:
        norm_sq = float(np.real(np.vdot(branch.amplitudes, branch.amplitudes)))
        if norm_sq <= 1e-15:
            return 0.0
        return qsim.fidelity_pure(expected, branch) / norm_sq

    # teleportability demands literal branch equality, so no phase alignment here
    mismatch = float(np.linalg.norm(plus.amplitudes - minus.amplitudes))
    return GateTeleportResult(plus, minus, expected, branch_fidelity(plus),
                              branch_fidelity(minus), mismatch, witness)
