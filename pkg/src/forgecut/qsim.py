"""Dense pure-state and density-operator simulation.

Qubit order is little-endian throughout the package: qubit 0 is the least
significant bit of the amplitude index, so tensoring a state onto *higher*
qubit indices is ``np.kron(high_part, low_part)``.

Gate matrices are indexed big-endian over their own targets: for a two-qubit
gate, ``targets[0]`` is the most significant bit of the matrix row/column
index, i.e. the matrix equals ``kron(op_on_targets0, op_on_targets1)``.
``cnot(c, t)`` therefore has the textbook block form [[I, 0], [0, X]].

States are immutable: every operation returns a new object. Subnormalized
density operators (projection residues) carry their trace in ``trace_weight``
instead of being renormalized, because signed recombination sums raw branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

ATOL_CONSTRUCT = 1e-10  # construction-time validity checks
ATOL_EXACT = 1e-12      # equality after exact-arithmetic-friendly operations

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


class StateError(ValueError):
    """Invalid state construction or state/operator mismatch."""


class GateError(ValueError):
    """Invalid gate construction or application."""


class Axis(str, Enum):
    """Pauli measurement/preparation axis."""

    X = "x"
    Y = "y"
    Z = "z"


AXES = (Axis.X, Axis.Y, Axis.Z)

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {Axis.X: PAULI_X, Axis.Y: PAULI_Y, Axis.Z: PAULI_Z}

_H = np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2
_S = np.array([[1, 0], [0, 1j]], dtype=complex)

# |outcome_axis> column vectors; |0_y> = (|0> + i|1>)/sqrt(2).
_EIGENVECTORS = {
    (Axis.Z, 0): np.array([1, 0], dtype=complex),
    (Axis.Z, 1): np.array([0, 1], dtype=complex),
    (Axis.X, 0): np.array([1, 1], dtype=complex) * _INV_SQRT2,
    (Axis.X, 1): np.array([1, -1], dtype=complex) * _INV_SQRT2,
    (Axis.Y, 0): np.array([1, 1j], dtype=complex) * _INV_SQRT2,
    (Axis.Y, 1): np.array([1, -1j], dtype=complex) * _INV_SQRT2,
}

# U with U|i_axis> = |i_z>, used to rotate a measurement into the z basis.
_BASIS_ROTATIONS = {
    Axis.Z: PAULI_I,
    Axis.X: _H,
    Axis.Y: _H @ _S.conj().T,
}


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise StateError(f"{what} contains NaN or Inf entries")


def _num_qubits_of(dim: int, what: str) -> int:
    n = dim.bit_length() - 1
    if dim <= 0 or 2**n != dim:
        raise StateError(f"{what} dimension {dim} is not a power of two")
    return n


# ---------------------------------------------------------------------------
# linear-algebra kernels: embed a small matrix on selected qubits
# ---------------------------------------------------------------------------

def _apply_to_rows(arr: np.ndarray, mat: np.ndarray, targets: tuple[int, ...], n: int) -> np.ndarray:
    """Apply ``mat`` on the row index of ``arr`` (shape (2**n, M)), embedded on ``targets``."""
    k = len(targets)
    cols = arr.shape[1]
    tensor = arr.reshape((2,) * n + (cols,))
    # qubit q lives on axis n-1-q (little-endian); targets[0] must become the
    # most significant gate index, hence it is moved to the front.
    axes = [n - 1 - q for q in targets]
    tensor = np.moveaxis(tensor, axes, range(k))
    rest = tensor.shape[k:]
    tensor = mat @ tensor.reshape(2**k, -1)
    tensor = tensor.reshape((2,) * k + rest)
    tensor = np.moveaxis(tensor, range(k), axes)
    return tensor.reshape(2**n, cols)


def _apply_vec(vec: np.ndarray, mat: np.ndarray, targets: tuple[int, ...], n: int) -> np.ndarray:
    return _apply_to_rows(vec.reshape(-1, 1), mat, targets, n).reshape(-1)


def _apply_rho(rho: np.ndarray, mat: np.ndarray, targets: tuple[int, ...], n: int) -> np.ndarray:
    """rho -> M rho M† with M embedded on ``targets``."""
    left = _apply_to_rows(rho, mat, targets, n)
    return _apply_to_rows(left.conj().T, mat, targets, n).conj().T


def _check_targets(targets: tuple[int, ...], n: int) -> None:
    if len(set(targets)) != len(targets):
        raise GateError(f"duplicate targets {targets}")
    for q in targets:
        if not 0 <= q < n:
            raise GateError(f"target qubit {q} out of range for {n} qubits")


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

class PureState:
    """Statevector on ``num_qubits`` qubits, normalized unless flagged."""

    __slots__ = ("amplitudes", "num_qubits")

    def __init__(self, amplitudes: np.ndarray, *, subnormalized: bool = False):
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise StateError("amplitudes must be a vector")
        self.num_qubits = _num_qubits_of(amps.shape[0], "state")
        _require_finite(amps, "state")
        if not subnormalized:
            norm = float(np.linalg.norm(amps))
            if abs(norm - 1.0) > ATOL_CONSTRUCT:
                raise StateError(f"state norm {norm} differs from 1 beyond {ATOL_CONSTRUCT}")
        amps = amps.copy()
        amps.flags.writeable = False
        self.amplitudes = amps

    @classmethod
    def zero(cls, num_qubits: int) -> "PureState":
        if num_qubits < 1:
            raise StateError("need at least one qubit")
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def product(cls, factors: "list[PureState]") -> "PureState":
        """Tensor product; ``factors[0]`` occupies the lowest qubit indices."""
        amps = factors[0].amplitudes
        for f in factors[1:]:
            amps = np.kron(f.amplitudes, amps)
        return cls(amps)

    def tensor(self, other: "PureState") -> "PureState":
        """``self`` on low qubits, ``other`` on high qubits."""
        return PureState(np.kron(other.amplitudes, self.amplitudes), subnormalized=True)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density(self) -> "DensityOperator":
        return DensityOperator._trusted(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __repr__(self) -> str:
        return f"PureState(num_qubits={self.num_qubits})"


class DensityOperator:
    """Hermitian PSD operator; possibly subnormalized (trace carried, not renormalized)."""

    __slots__ = ("matrix", "num_qubits", "trace_weight")

    def __init__(self, matrix: np.ndarray, *, subnormalized: bool = False, validate: bool = True):
        mat = np.asarray(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise StateError("density operator must be a square matrix")
        self.num_qubits = _num_qubits_of(mat.shape[0], "density operator")
        if validate:
            _require_finite(mat, "density operator")
            if np.max(np.abs(mat - mat.conj().T)) > ATOL_CONSTRUCT:
                raise StateError("density operator is not Hermitian within tolerance")
        tr = float(np.real(np.trace(mat)))
        if validate:
            if subnormalized:
                if not -ATOL_CONSTRUCT <= tr <= 1.0 + ATOL_CONSTRUCT:
                    raise StateError(f"subnormalized trace {tr} outside [0, 1]")
            elif abs(tr - 1.0) > ATOL_CONSTRUCT:
                raise StateError(f"trace {tr} differs from 1 beyond {ATOL_CONSTRUCT}")
            # PSD check is O(d^3); every operator in this package is small.
            if mat.shape[0] <= 256 and np.linalg.eigvalsh(mat).min() < -1e-9:
                raise StateError("density operator has an eigenvalue below -1e-9")
        mat = mat.copy()
        mat.flags.writeable = False
        self.matrix = mat
        self.trace_weight = tr

    @classmethod
    def _trusted(cls, matrix: np.ndarray) -> "DensityOperator":
        """Wrap a matrix produced by internal trace-safe operations, skipping validation."""
        return cls(matrix, subnormalized=True, validate=False)

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityOperator":
        return state.to_density()

    @classmethod
    def zero_state(cls, num_qubits: int) -> "DensityOperator":
        return PureState.zero(num_qubits).to_density()

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "DensityOperator":
        dim = 2**num_qubits
        return cls._trusted(np.eye(dim, dtype=complex) / dim)

    def tensor(self, other: "DensityOperator") -> "DensityOperator":
        """``self`` on low qubits, ``other`` on high qubits."""
        return DensityOperator._trusted(np.kron(other.matrix, self.matrix))

    def normalized(self) -> "DensityOperator":
        if self.trace_weight <= 0.0:
            raise StateError("cannot normalize an operator with nonpositive trace")
        return DensityOperator._trusted(self.matrix / self.trace_weight)

    def __repr__(self) -> str:
        return f"DensityOperator(num_qubits={self.num_qubits}, trace_weight={self.trace_weight:.6g})"


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnitaryGate:
    """A 1- or 2-qubit unitary bound to target qubit indices."""

    matrix: np.ndarray
    targets: tuple[int, ...]
    name: str = "u"

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        arity = len(self.targets)
        if arity not in (1, 2):
            raise GateError(f"gate arity {arity} unsupported (only 1- and 2-qubit gates)")
        if mat.shape != (2**arity, 2**arity):
            raise GateError(f"matrix shape {mat.shape} does not match {arity} targets")
        _require_finite(mat, "gate matrix")
        if np.max(np.abs(mat.conj().T @ mat - np.eye(2**arity))) > ATOL_CONSTRUCT:
            raise GateError(f"gate '{self.name}' matrix is not unitary within {ATOL_CONSTRUCT}")
        if len(set(self.targets)) != arity:
            raise GateError(f"duplicate targets {self.targets}")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))

    @property
    def arity(self) -> int:
        return len(self.targets)

    def on(self, *targets: int) -> "UnitaryGate":
        """The same operation bound to different target qubits."""
        return UnitaryGate(self.matrix, tuple(targets), self.name)


def identity(q: int) -> UnitaryGate:
    return UnitaryGate(PAULI_I, (q,), "i")


def x(q: int) -> UnitaryGate:
    return UnitaryGate(PAULI_X, (q,), "x")


def y(q: int) -> UnitaryGate:
    return UnitaryGate(PAULI_Y, (q,), "y")


def z(q: int) -> UnitaryGate:
    return UnitaryGate(PAULI_Z, (q,), "z")


def h(q: int) -> UnitaryGate:
    return UnitaryGate(_H, (q,), "h")


def s(q: int) -> UnitaryGate:
    return UnitaryGate(_S, (q,), "s")


def sdg(q: int) -> UnitaryGate:
    return UnitaryGate(_S.conj().T, (q,), "sdg")


def rx(theta: float, q: int) -> UnitaryGate:
    c, sn = math.cos(theta / 2), math.sin(theta / 2)
    return UnitaryGate(np.array([[c, -1j * sn], [-1j * sn, c]]), (q,), "rx")


def ry(theta: float, q: int) -> UnitaryGate:
    c, sn = math.cos(theta / 2), math.sin(theta / 2)
    return UnitaryGate(np.array([[c, -sn], [sn, c]]), (q,), "ry")


def rz(theta: float, q: int) -> UnitaryGate:
    return UnitaryGate(np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)]), (q,), "rz")


def controlled(u: np.ndarray, control: int, target: int, name: str = "cu") -> UnitaryGate:
    """Controlled single-qubit unitary; control is the most significant matrix index."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise GateError("controlled() takes a 2x2 matrix")
    mat = np.zeros((4, 4), dtype=complex)
    mat[:2, :2] = PAULI_I
    mat[2:, 2:] = u
    return UnitaryGate(mat, (control, target), name)


def cnot(control: int, target: int) -> UnitaryGate:
    return controlled(PAULI_X, control, target, "cnot")


def cz(control: int, target: int) -> UnitaryGate:
    return controlled(PAULI_Z, control, target, "cz")


def crz(theta: float, control: int, target: int) -> UnitaryGate:
    return controlled(rz(theta, 0).matrix, control, target, "crz")


def swap(a: int, b: int) -> UnitaryGate:
    mat = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
    return UnitaryGate(mat, (a, b), "swap")


def gate_from_matrix(matrix: np.ndarray, targets: tuple[int, ...], name: str = "matrix") -> UnitaryGate:
    return UnitaryGate(np.asarray(matrix, dtype=complex), tuple(targets), name)


# ---------------------------------------------------------------------------
# projectors and eigenstates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectorSpec:
    """Rank-1 projector |outcome_axis><outcome_axis| on one qubit."""

    axis: Axis
    outcome: int
    target: int

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise StateError(f"outcome must be 0 or 1, got {self.outcome}")
        object.__setattr__(self, "axis", Axis(self.axis))

    def vector(self) -> np.ndarray:
        return _EIGENVECTORS[(self.axis, self.outcome)]

    def matrix(self) -> np.ndarray:
        v = self.vector()
        return np.outer(v, v.conj())


def pauli_eigenstate(axis: Axis, outcome: int) -> PureState:
    """Single-qubit eigenstate |outcome_axis> of the given Pauli axis."""
    if outcome not in (0, 1):
        raise StateError(f"outcome must be 0 or 1, got {outcome}")
    return PureState(_EIGENVECTORS[(Axis(axis), outcome)])


def basis_rotation(axis: Axis, q: int) -> UnitaryGate:
    """Unitary mapping the axis eigenbasis to the computational basis on qubit q."""
    return UnitaryGate(_BASIS_ROTATIONS[Axis(axis)], (q,), f"rot_{Axis(axis).value}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def apply_unitary(state, gate: UnitaryGate):
    """Apply a gate; returns the same state type. Trace/norm preserved."""
    if isinstance(state, PureState):
        _check_targets(gate.targets, state.num_qubits)
        amps = _apply_vec(state.amplitudes, gate.matrix, gate.targets, state.num_qubits)
        return PureState(amps, subnormalized=True)
    if isinstance(state, DensityOperator):
        _check_targets(gate.targets, state.num_qubits)
        mat = _apply_rho(state.matrix, gate.matrix, gate.targets, state.num_qubits)
        return DensityOperator._trusted(mat)
    raise StateError(f"cannot apply gate to {type(state).__name__}")


def project(state: DensityOperator, proj: ProjectorSpec) -> tuple[DensityOperator, float]:
    """Unnormalized projection (Pi rho Pi, Tr(Pi rho)); the residue keeps its weight."""
    _check_targets((proj.target,), state.num_qubits)
    mat = _apply_rho(state.matrix, proj.matrix(), (proj.target,), state.num_qubits)
    out = DensityOperator._trusted(mat)
    return out, out.trace_weight


def project_pure(state: PureState, proj: ProjectorSpec) -> tuple[PureState, float]:
    """As :func:`project` but on a statevector; the residue norm² is the probability."""
    _check_targets((proj.target,), state.num_qubits)
    amps = _apply_vec(state.amplitudes, proj.matrix(), (proj.target,), state.num_qubits)
    prob = float(np.real(np.vdot(amps, amps)))
    return PureState(amps, subnormalized=True), prob


def partial_trace(state: DensityOperator, keep) -> DensityOperator:
    """Reduced operator on ``keep`` (order-preserving: output qubit j is keep[j])."""
    keep = [int(q) for q in keep]
    n = state.num_qubits
    if not keep:
        raise StateError("keep set must be nonempty")
    if len(set(keep)) != len(keep) or any(not 0 <= q < n for q in keep):
        raise StateError(f"invalid keep set {keep} for {n} qubits")
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for q in range(n):
        if q not in keep:
            col[n - 1 - q] = row[n - 1 - q]  # tie row and col axes: traced out
    out_row = [row[n - 1 - q] for q in reversed(keep)]
    out_col = [col[n - 1 - q] for q in reversed(keep)]
    spec = "".join(row) + "".join(col) + "->" + "".join(out_row) + "".join(out_col)
    tensor = state.matrix.reshape((2,) * (2 * n))
    reduced = np.einsum(spec, tensor).reshape(2 ** len(keep), 2 ** len(keep))
    return DensityOperator._trusted(reduced)


def expectation(state: DensityOperator, observable: np.ndarray, targets=None, *, normalized: bool = False) -> float:
    """Tr(O rho), with O embedded on ``targets`` (all qubits if None).

    With ``normalized=True`` divides by the carried trace weight, giving the
    expectation in the normalized state.
    """
    obs = np.asarray(observable, dtype=complex)
    if np.max(np.abs(obs - obs.conj().T)) > ATOL_CONSTRUCT:
        raise StateError("observable is not Hermitian within tolerance")
    n = state.num_qubits
    if targets is None:
        targets = tuple(range(_num_qubits_of(obs.shape[0], "observable") - 1, -1, -1))
        # full-register observable: big-endian matrix over (q_{n-1}..q_0)
        if obs.shape[0] != 2**n:
            raise StateError(f"observable dim {obs.shape[0]} does not match {n} qubits")
    else:
        targets = tuple(int(q) for q in targets)
        if obs.shape[0] != 2 ** len(targets):
            raise StateError("observable dim does not match number of targets")
        _check_targets(targets, n)
    rows = _apply_to_rows(state.matrix, obs, targets, n)
    val = complex(np.trace(rows))
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise StateError(f"expectation value {val} has a large imaginary part")
    out = val.real
    if normalized:
        if state.trace_weight <= 0.0:
            raise StateError("cannot normalize by nonpositive trace weight")
        out /= state.trace_weight
    return out


def measure_pure(state: PureState, qubit: int, axis: Axis, rng: np.random.Generator) -> tuple[int, PureState, float]:
    """Born-rule measurement of one qubit in a Pauli axis; collapses and renormalizes."""
    branch0, p0 = project_pure(state, ProjectorSpec(axis, 0, qubit))
    total = float(np.real(np.vdot(state.amplitudes, state.amplitudes)))
    outcome = 0 if rng.random() * total < p0 else 1
    if outcome == 0:
        collapsed, p = branch0, p0
    else:
        collapsed, p = project_pure(state, ProjectorSpec(axis, 1, qubit))
    norm = math.sqrt(p)
    if norm <= 0.0:
        raise StateError("measured a zero-probability outcome")
    return outcome, PureState(collapsed.amplitudes / norm, subnormalized=True), p / total


# ---------------------------------------------------------------------------
# comparisons and random objects
# ---------------------------------------------------------------------------

def permute_qubits(state, perm):
    """Relabel qubits: new qubit q is old qubit perm[q]. Works on both state types."""
    if isinstance(state, PureState):
        n = state.num_qubits
    elif isinstance(state, DensityOperator):
        n = state.num_qubits
    else:
        raise StateError(f"cannot permute {type(state).__name__}")
    if sorted(perm) != list(range(n)):
        raise StateError(f"perm {perm} is not a permutation of {n} qubits")
    order = [n - 1 - perm[n - 1 - a] for a in range(n)]
    if isinstance(state, PureState):
        amps = state.amplitudes.reshape((2,) * n).transpose(order).reshape(-1)
        return PureState(amps, subnormalized=True)
    full = order + [o + n for o in order]
    mat = state.matrix.reshape((2,) * (2 * n)).transpose(full).reshape(2**n, 2**n)
    return DensityOperator._trusted(mat)


def fidelity_pure(a: PureState, b: PureState) -> float:
    """|<a|b>|², insensitive to global phase."""
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def fidelity_pure_mixed(psi: PureState, rho: DensityOperator) -> float:
    """<psi| rho |psi> for a normalized rho."""
    return float(np.real(psi.amplitudes.conj() @ rho.matrix @ psi.amplitudes))


def trace_distance(a: DensityOperator, b: DensityOperator) -> float:
    """(1/2) tr |a - b|."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a.matrix - b.matrix))))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_pure(num_qubits: int, rng: np.random.Generator) -> PureState:
    amps = rng.normal(size=2**num_qubits) + 1j * rng.normal(size=2**num_qubits)
    return PureState(amps / np.linalg.norm(amps))


def random_density(num_qubits: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    dim = 2**num_qubits
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    mat = g @ g.conj().T
    return DensityOperator(mat / np.real(np.trace(mat)))
