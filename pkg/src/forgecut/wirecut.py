"""Identity-channel wire cutting: branch states and signed recombination.

The identity channel on one qubit decomposes into measure-then-prepare
channels over the three Pauli axes,

    I(.) = M_z(.) + M_x(.) - P_z ∘ M_y(.)

with M_a the projective measurement channel in axis a and P_z conjugation by
Pauli z. Equivalently: measure (i, axis), prepare (j, axis) on the far side
with j = i for x and z but j = 1 - i for y, and weight the y axis by -1.
That pairing is the 6x6 transition matrix

    M[(j, beta), (i, alpha)] = (-1)^{[alpha=y]} [alpha=beta]
                               ([i=j][alpha!=y] + [i!=j][alpha=y]).

Inserting the channel before and after each nonlocal gate splits the circuit
into local programs (see :mod:`forgecut.circuit`); running a program with
every measurement label projected and every preparation label substituted
yields subnormalized branch states, and the double transition-matrix sum over
label pairs reassembles the exact joint output state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import qsim
from .circuit import CutPlan, LocalProgram, PartitionedCircuit, split_local
from .observables import ObservableSum, PauliObservable
from .qsim import Axis, DensityOperator, ProjectorSpec, PureState

# canonical label order used for matrices and deterministic reductions
LABELS: tuple[tuple[int, Axis], ...] = tuple(
    (i, axis) for axis in (Axis.X, Axis.Y, Axis.Z) for i in (0, 1))


class WirecutError(ValueError):
    """Branch/plan mismatch or recombination failure."""


class MissingBranchError(WirecutError):
    """A label combination required by recombination was not supplied."""


def axis_sign(axis: Axis) -> int:
    """epsilon_alpha: -1 for the y axis, +1 otherwise."""
    return -1 if Axis(axis) == Axis.Y else 1


def paired_bit(axis: Axis, i: int) -> int:
    """The preparation bit j matched to measurement bit i on the same axis."""
    return 1 - i if Axis(axis) == Axis.Y else i


def transition_entry(j: int, beta: Axis, i: int, alpha: Axis) -> int:
    alpha, beta = Axis(alpha), Axis(beta)
    if alpha != beta:
        return 0
    if alpha == Axis.Y:
        return -1 if i != j else 0
    return 1 if i == j else 0


def transition_matrix() -> np.ndarray:
    """Full 6x6 signed pairing matrix, rows (j, beta), columns (i, alpha)."""
    mat = np.zeros((6, 6), dtype=int)
    for r, (j, beta) in enumerate(LABELS):
        for c, (i, alpha) in enumerate(LABELS):
            mat[r, c] = transition_entry(j, beta, i, alpha)
    return mat


def forged_identity(rho: DensityOperator) -> DensityOperator:
    """M_z + M_x - P_z ∘ M_y applied to a single-qubit state; equals rho."""
    if rho.num_qubits != 1:
        raise WirecutError("forged_identity acts on one qubit")
    acc = np.zeros((2, 2), dtype=complex)
    for axis in (Axis.Z, Axis.X):
        for outcome in (0, 1):
            branch, _ = qsim.project(rho, ProjectorSpec(axis, outcome, 0))
            acc += branch.matrix
    for outcome in (0, 1):
        branch, _ = qsim.project(rho, ProjectorSpec(Axis.Y, outcome, 0))
        acc -= qsim.PAULI_Z @ branch.matrix @ qsim.PAULI_Z
    return DensityOperator._trusted(acc)


# ---------------------------------------------------------------------------
# program execution (density mode)
# ---------------------------------------------------------------------------

def _norm_label(label) -> tuple[int, Axis]:
    outcome, axis = label
    outcome = int(outcome)
    if outcome not in (0, 1):
        raise WirecutError(f"label outcome must be 0 or 1, got {outcome}")
    return outcome, Axis(axis)


def _norm_labels(labels, num_cuts: int, what: str) -> tuple[tuple[int, Axis], ...]:
    if num_cuts == 1 and len(labels) == 2 and not isinstance(labels[0], (tuple, list)):
        labels = (labels,)
    labels = tuple(_norm_label(l) for l in labels)
    if len(labels) != num_cuts:
        raise WirecutError(f"expected {num_cuts} {what} labels, got {len(labels)}")
    return labels


@dataclass(frozen=True)
class BranchLabel:
    """Per-cut measured and prepared labels of one party's branch."""

    measured: tuple[tuple[int, Axis], ...]
    prepared: tuple[tuple[int, Axis], ...]


@dataclass(frozen=True)
class BranchState:
    """Subnormalized payload state labeled by its cut measurement/preparation."""

    label: BranchLabel
    state: DensityOperator

    @property
    def trace_weight(self) -> float:
        return self.state.trace_weight


def _prep_unitary(source: np.ndarray, source_perp: np.ndarray,
                  dest: tuple[int, Axis]) -> np.ndarray:
    """Unitary sending |source> to the destination eigenstate (slot known pure)."""
    outcome, axis = dest
    to_vec = qsim._EIGENVECTORS[(axis, outcome)]
    to_perp = qsim._EIGENVECTORS[(axis, 1 - outcome)]
    return np.outer(to_vec, source.conj()) + np.outer(to_perp, source_perp.conj())


_ZERO = np.array([1, 0], dtype=complex)
_ONE = np.array([0, 1], dtype=complex)


def _initial_density(program: LocalProgram) -> DensityOperator:
    from .circuit import _STATE_NAMES
    states = [qsim.pauli_eigenstate(*_STATE_NAMES[name]) for name in program.initial]
    return PureState.product(states).to_density()


def run_branch(program: LocalProgram, measured, prepared) -> BranchState:
    """Execute one party's program for fixed cut labels; returns the raw branch.

    Measurements project without renormalizing, preparations reset the slot
    unitarily (the slot is in a known pure state at that point: fresh |0> or
    the just-measured eigenstate), and dead wires are traced out at the end.
    """
    measured = _norm_labels(measured, program.num_cuts, "measured")
    prepared = _norm_labels(prepared, program.num_cuts, "prepared")
    rho = _initial_density(program)
    for op in program.ops:
        if op.kind == "gate":
            rho = qsim.apply_unitary(rho, op.gate)
        elif op.kind == "measure_cut":
            outcome, axis = measured[op.cut]
            rho, _ = qsim.project(rho, ProjectorSpec(axis, outcome, op.slot))
        elif op.kind == "prepare_cut":
            if op.source == "measured":
                m_out, m_axis = measured[op.cut]
                src = qsim._EIGENVECTORS[(m_axis, m_out)]
                src_perp = qsim._EIGENVECTORS[(m_axis, 1 - m_out)]
            else:
                src, src_perp = _ZERO, _ONE
            prep = _prep_unitary(src, src_perp, prepared[op.cut])
            rho = DensityOperator._trusted(
                qsim._apply_rho(rho.matrix, prep, (op.slot,), rho.num_qubits))
        else:
            raise WirecutError(f"unknown program op {op.kind!r}")
    reduced = qsim.partial_trace(rho, program.payload_slots)
    return BranchState(BranchLabel(measured, prepared), reduced)


def alice_branch(program: LocalProgram, prep, meas) -> BranchState:
    """Cut-side branch: prep = (l, nu) on the returned wire, meas = (i, alpha) on the cut wire."""
    return run_branch(program, meas, prep)


def bob_branch(program: LocalProgram, prep, meas) -> BranchState:
    """Far-side branch: prep = (j, beta) on the transported wire, meas = (k, mu) after the gate."""
    return run_branch(program, meas, prep)


def enumerate_branches(program: LocalProgram) -> dict:
    """All 6^(2L) branches keyed by (measured_labels, prepared_labels)."""
    out = {}
    combos = itertools.product(LABELS, repeat=program.num_cuts)
    for measured in combos:
        for prepared in itertools.product(LABELS, repeat=program.num_cuts):
            out[(measured, prepared)] = run_branch(program, measured, prepared)
    return out


# ---------------------------------------------------------------------------
# recombination
# ---------------------------------------------------------------------------

def _pairing_iter(num_cuts: int):
    """Yield (alice_meas, bob_prep, bob_meas, alice_prep, sign) over surviving pairings."""
    for alice_meas in itertools.product(LABELS, repeat=num_cuts):
        bob_prep = tuple((paired_bit(a, i), a) for i, a in alice_meas)
        sign_a = 1
        for _, a in alice_meas:
            sign_a *= axis_sign(a)
        for bob_meas in itertools.product(LABELS, repeat=num_cuts):
            alice_prep = tuple((paired_bit(a, k), a) for k, a in bob_meas)
            sign = sign_a
            for _, a in bob_meas:
                sign *= axis_sign(a)
            yield alice_meas, bob_prep, bob_meas, alice_prep, sign


def _lookup(branches: dict, key, party: str):
    try:
        entry = branches[key]
    except KeyError:
        raise MissingBranchError(f"{party} branch {key} missing from supplied set") from None
    return entry


def recombine_exact(branches_a: dict, branches_b: dict, num_cuts: int,
                    *, trace_atol: float = 1e-8) -> DensityOperator:
    """Signed double-pairing sum; exact joint output state (cut party on low qubits)."""
    acc = None
    for alice_meas, bob_prep, bob_meas, alice_prep, sign in _pairing_iter(num_cuts):
        rho_a = _lookup(branches_a, (alice_meas, alice_prep), "alice").state
        rho_b = _lookup(branches_b, (bob_meas, bob_prep), "bob").state
        term = sign * np.kron(rho_b.matrix, rho_a.matrix)
        acc = term if acc is None else acc + term
    trace = float(np.real(np.trace(acc)))
    if abs(trace - 1.0) > trace_atol:
        raise WirecutError(f"recombined trace {trace} differs from 1 beyond {trace_atol}")
    return DensityOperator(acc, subnormalized=True)


def recombine_expectation(observable, branches_a: dict, branches_b: dict,
                          num_payload_a: int, num_cuts: int) -> float:
    """<O> from per-branch local expectations only (no joint state built).

    The observable must factor across the partition: a product Pauli or an
    explicit sum of products.
    """
    if isinstance(observable, ObservableSum):
        return sum(c * recombine_expectation(obs, branches_a, branches_b,
                                             num_payload_a, num_cuts)
                   for c, obs in observable.terms)
    if not isinstance(observable, PauliObservable):
        raise WirecutError("non-product observables must be supplied as a sum of products")
    obs_a, obs_b = observable.split(num_payload_a)
    total = 0.0
    for alice_meas, bob_prep, bob_meas, alice_prep, sign in _pairing_iter(num_cuts):
        rho_a = _lookup(branches_a, (alice_meas, alice_prep), "alice").state
        rho_b = _lookup(branches_b, (bob_meas, bob_prep), "bob").state
        total += sign * (obs_a.expectation_density(rho_a) * obs_b.expectation_density(rho_b))
    return total


def branch_expectations(branch: BranchState, observables: list[PauliObservable]) -> list[float]:
    """Raw (weight-carrying) local expectations for export across the classical channel."""
    return [obs.expectation_density(branch.state) for obs in observables]


# ---------------------------------------------------------------------------
# whole-circuit convenience
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutResult:
    state: DensityOperator            # joint output, Alice payload on low qubits
    expectations: dict                 # observable string -> value
    alice_program: LocalProgram
    bob_program: LocalProgram


def cut_exact(circuit: PartitionedCircuit, plan: CutPlan | None = None,
              observables=None) -> CutResult:
    """Split, enumerate all branches, and recombine exactly."""
    plan = plan or CutPlan()
    prog_a, prog_b = split_local(circuit, plan)
    if plan.side == "bob":
        # the mirrored construction cuts on Bob: swap the recombination roles
        branches_cut = enumerate_branches(prog_b)
        branches_far = enumerate_branches(prog_a)
        mirrored = recombine_exact(branches_cut, branches_far, circuit.num_nonlocal)
        n = circuit.bob_qubits
        perm = list(range(n, n + circuit.alice_qubits)) + list(range(n))
        state = qsim.permute_qubits(mirrored, perm)
    else:
        branches_a = enumerate_branches(prog_a)
        branches_b = enumerate_branches(prog_b)
        state = recombine_exact(branches_a, branches_b, circuit.num_nonlocal)
    values = {}
    for spec in observables or ():
        obs = PauliObservable.from_spec(spec, circuit.total_qubits)
        values[obs.to_string()] = obs.expectation_density(state)
    return CutResult(state, values, prog_a, prog_b)


# ---------------------------------------------------------------------------
# per-configuration outcome distributions (mitigation pipeline input)
# ---------------------------------------------------------------------------

def config_distribution(program: LocalProgram, meas_axes, prepared,
                        observable: PauliObservable | None = None) -> np.ndarray:
    """Joint outcome distribution P(payload bits, cut bits | axes, preparations).

    Index layout (little-endian): payload bit k is logical payload qubit k
    measured in the observable's basis (z where the observable is identity),
    and bit num_payload + g is cut g's measured bit in its chosen axis.
    """
    meas_axes = tuple(Axis(a) for a in (meas_axes if not isinstance(meas_axes, (str, Axis)) else (meas_axes,)))
    if len(meas_axes) != program.num_cuts:
        raise WirecutError(f"expected {program.num_cuts} measurement axes")
    num_out = program.num_payload + program.num_cuts
    dist = np.zeros(2**num_out)
    rotations = {}
    if observable is not None:
        rotations = {q: axis for q, axis in observable.factors}
    for bits in itertools.product((0, 1), repeat=program.num_cuts):
        measured = tuple(zip(bits, meas_axes))
        branch = run_branch(program, measured, prepared)
        rho = branch.state
        for q in range(program.num_payload):
            if q in rotations:
                rho = qsim.apply_unitary(rho, qsim.basis_rotation(rotations[q], q))
        probs = np.real(np.diag(rho.matrix))
        base = sum(b << (program.num_payload + g) for g, b in enumerate(bits))
        for s, p in enumerate(probs):
            dist[base + s] = p
    return dist
