"""Product-Pauli observables over the joint Alice+Bob register.

A string spec assigns character j to qubit j ("ZZ" on a 2-qubit register is
Z on qubit 0 times Z on qubit 1); a dict spec ``{"pauli": "ZZ", "qubits":
[0, 3]}`` places the characters on the listed global qubits. Only I, X, Y, Z
are allowed, so every observable here factors across any qubit bipartition
and has unit spectral norm per term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qsim
from .qsim import Axis, DensityOperator, PureState

_CHAR_TO_AXIS = {"X": Axis.X, "Y": Axis.Y, "Z": Axis.Z}


class ObservableError(ValueError):
    """Malformed observable specification."""


@dataclass(frozen=True)
class PauliObservable:
    """Tensor product of single-qubit Paulis (identity elsewhere)."""

    num_qubits: int
    factors: tuple[tuple[int, Axis], ...]  # (qubit, axis), sorted by qubit

    def __post_init__(self):
        qubits = [q for q, _ in self.factors]
        if len(set(qubits)) != len(qubits):
            raise ObservableError(f"repeated qubit in observable {self.factors}")
        if any(not 0 <= q < self.num_qubits for q in qubits):
            raise ObservableError(f"observable qubit out of range for {self.num_qubits} qubits")
        object.__setattr__(self, "factors", tuple(sorted((int(q), Axis(a)) for q, a in self.factors)))

    @classmethod
    def from_spec(cls, spec, num_qubits: int) -> "PauliObservable":
        if isinstance(spec, PauliObservable):
            if spec.num_qubits != num_qubits:
                raise ObservableError("observable register size mismatch")
            return spec
        if isinstance(spec, dict):
            chars, qubits = spec.get("pauli", ""), spec.get("qubits")
            if qubits is None or len(qubits) != len(chars):
                raise ObservableError("dict observable needs matching 'pauli' and 'qubits'")
        elif isinstance(spec, str):
            chars, qubits = spec, range(len(spec))
            if len(chars) != num_qubits:
                raise ObservableError(
                    f"bare string observable must cover all {num_qubits} qubits (got {len(chars)} chars)")
        else:
            raise ObservableError(f"unsupported observable spec {spec!r}")
        factors = []
        for ch, q in zip(chars.upper(), qubits):
            if ch == "I":
                continue
            if ch not in _CHAR_TO_AXIS:
                raise ObservableError(f"unknown Pauli character {ch!r}")
            factors.append((int(q), _CHAR_TO_AXIS[ch]))
        return cls(num_qubits, tuple(factors))

    def to_string(self) -> str:
        chars = ["I"] * self.num_qubits
        for q, a in self.factors:
            chars[q] = a.value.upper()
        return "".join(chars)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.factors)

    def split(self, num_low: int) -> tuple["PauliObservable", "PauliObservable"]:
        """Factor across the cut qubits [0, num_low) | [num_low, N); local indexing."""
        low = [(q, a) for q, a in self.factors if q < num_low]
        high = [(q - num_low, a) for q, a in self.factors if q >= num_low]
        return (PauliObservable(num_low, tuple(low)),
                PauliObservable(self.num_qubits - num_low, tuple(high)))

    def eigenvalue(self, bits: int) -> int:
        """(-1)^(parity of measured bits on the support), bits little-endian over all qubits."""
        parity = 0
        for q in self.support:
            parity ^= (bits >> q) & 1
        return -1 if parity else 1

    def rotation_gates(self) -> list[qsim.UnitaryGate]:
        """Gates mapping each support qubit's eigenbasis to the z basis."""
        return [qsim.basis_rotation(a, q) for q, a in self.factors]

    def apply_to_vector(self, amps: np.ndarray) -> np.ndarray:
        out = amps
        for q, a in self.factors:
            out = qsim._apply_vec(out, qsim.PAULIS[a], (q,), self.num_qubits)
        return out

    def expectation_pure(self, state: PureState) -> float:
        if state.num_qubits != self.num_qubits:
            raise ObservableError("state size does not match observable")
        return float(np.real(np.vdot(state.amplitudes, self.apply_to_vector(state.amplitudes))))

    def expectation_density(self, state: DensityOperator, *, normalized: bool = False) -> float:
        if state.num_qubits != self.num_qubits:
            raise ObservableError("state size does not match observable")
        rows = state.matrix
        for q, a in self.factors:
            rows = qsim._apply_to_rows(rows, qsim.PAULIS[a], (q,), self.num_qubits)
        val = float(np.real(np.trace(rows)))
        if normalized:
            val /= state.trace_weight
        return val

    def matrix(self) -> np.ndarray:
        """Dense matrix (little-endian index); intended for small oracle registers."""
        if self.num_qubits > 10:
            raise ObservableError("dense observable matrix limited to 10 qubits")
        mat = np.array([[1.0 + 0j]])
        lookup = dict(self.factors)
        for q in range(self.num_qubits):
            factor = qsim.PAULIS[lookup[q]] if q in lookup else qsim.PAULI_I
            mat = np.kron(factor, mat)
        return mat

    def norm_inf(self) -> float:
        return 1.0


@dataclass(frozen=True)
class ObservableSum:
    """Real linear combination of product Paulis (for non-product observables)."""

    terms: tuple[tuple[float, PauliObservable], ...]

    def __post_init__(self):
        if not self.terms:
            raise ObservableError("empty observable sum")
        sizes = {obs.num_qubits for _, obs in self.terms}
        if len(sizes) != 1:
            raise ObservableError("mixed register sizes in observable sum")

    @property
    def num_qubits(self) -> int:
        return self.terms[0][1].num_qubits

    def expectation_density(self, state: DensityOperator, *, normalized: bool = False) -> float:
        return sum(c * obs.expectation_density(state, normalized=normalized) for c, obs in self.terms)

    def norm_inf(self) -> float:
        # triangle-inequality bound; exact enough for contribution bound checks
        return float(sum(abs(c) for c, _ in self.terms))


def as_observable(spec, num_qubits: int) -> PauliObservable:
    return PauliObservable.from_spec(spec, num_qubits)
