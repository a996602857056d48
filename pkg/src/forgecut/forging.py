"""Signed product-state decompositions of entangled two-party states.

A decomposition is a list of signed terms {x_i, rho_A^i, rho_B^i} with
sum(x_i) = 1 whose weighted tensor products reproduce a target state. Its
cost factor Z = sum |x_i| governs the sampling overhead of simulating the
target with separable executions: terms are drawn with probability |x_i|/Z
and contribute with sign sgn(x_i).

The Bell pair decomposes into six Pauli-eigenstate product terms with Z = 3.
General pure states use the Schmidt-based pseudomixture: diagonal terms
lambda_i^2 on |ii><ii| plus, for every pair j < i and p in Z_4, a cross term
(-1)^p lambda_i lambda_j on the superposition states
|ij_p> = (|i> + i^p |j>)/sqrt(2) taken on both sides. The identity

    sum_p (-1)^p |ij_p><ij_p| ⊗ |ij_p><ij_p| = |ii><jj| + |jj><ii|

makes the reconstruction exact; on uniform Schmidt coefficients the
construction reduces term-for-term to the Bell forging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qsim
from .qsim import Axis, DensityOperator, PureState

RECONSTRUCTION_ATOL = 1e-10


class DecompositionError(ValueError):
    """Invalid or inconsistent decomposition."""


@dataclass(frozen=True)
class PauliLabel:
    """Basis-label form of a term state: |outcome_axis><outcome_axis|."""

    axis: Axis
    outcome: int

    def pure(self) -> PureState:
        return qsim.pauli_eigenstate(self.axis, self.outcome)

    def density(self) -> DensityOperator:
        return self.pure().to_density()

    def __str__(self) -> str:
        return f"{self.outcome}{self.axis.value}"


TermState = PauliLabel | PureState | DensityOperator


def materialize(state: TermState) -> DensityOperator:
    if isinstance(state, PauliLabel):
        return state.density()
    if isinstance(state, PureState):
        return state.to_density()
    if isinstance(state, DensityOperator):
        return state
    raise DecompositionError(f"cannot materialize {type(state).__name__}")


def as_label(vec: np.ndarray, atol: float = 1e-12) -> PauliLabel | None:
    """Recognize a single-qubit vector as a Pauli eigenstate (up to global phase)."""
    if vec.shape != (2,):
        return None
    for (axis, outcome), ref in qsim._EIGENVECTORS.items():
        if abs(np.vdot(ref, vec)) > 1.0 - atol:
            return PauliLabel(axis, outcome)
    return None


@dataclass(frozen=True)
class ProductTerm:
    coefficient: float
    state_a: TermState
    state_b: TermState

    def __post_init__(self):
        if not math.isfinite(self.coefficient) or self.coefficient == 0.0:
            raise DecompositionError(f"term coefficient {self.coefficient} must be finite and nonzero")

    def joint(self) -> np.ndarray:
        """Dense product rho_A ⊗ rho_B with A on the low qubits."""
        return np.kron(materialize(self.state_b).matrix, materialize(self.state_a).matrix)


class QuasiDecomposition:
    """Signed product-term decomposition of a target two-party state."""

    def __init__(self, terms, target: DensityOperator | None = None, *, check: bool = True):
        self.terms: tuple[ProductTerm, ...] = tuple(terms)
        self.target = target
        self._cumulative = None
        if check:
            self.validate()

    def validate(self, atol: float = RECONSTRUCTION_ATOL) -> None:
        if not self.terms:
            raise DecompositionError("decomposition has no terms")
        total = sum(t.coefficient for t in self.terms)
        if abs(total - 1.0) > atol:
            raise DecompositionError(f"coefficients sum to {total}, expected 1")
        if self.target is not None:
            residual = np.max(np.abs(self.reconstruct().matrix - self.target.matrix))
            if residual > atol:
                raise DecompositionError(f"reconstruction residual {residual:.3e} exceeds {atol}")

    @property
    def z_factor(self) -> float:
        return sum(abs(t.coefficient) for t in self.terms)

    def reconstruct(self) -> DensityOperator:
        """Explicit sum over terms; zero operator for an empty (invalid) term list."""
        if not self.terms:
            if self.target is None:
                raise DecompositionError("empty decomposition with no target dimension")
            return DensityOperator._trusted(np.zeros_like(self.target.matrix))
        acc = self.terms[0].coefficient * self.terms[0].joint()
        for term in self.terms[1:]:
            joint = term.joint()
            if joint.shape != acc.shape:
                raise DecompositionError("terms have mismatched dimensions")
            acc = acc + term.coefficient * joint
        return DensityOperator._trusted(acc)

    def sample_term(self, rng: np.random.Generator) -> tuple[ProductTerm, int]:
        """Draw a term with probability |x_i|/Z; returns (term, sign of x_i)."""
        if self._cumulative is None:
            weights = np.array([abs(t.coefficient) for t in self.terms])
            self._cumulative = np.cumsum(weights / weights.sum())
        idx = int(np.searchsorted(self._cumulative, rng.random(), side="right"))
        idx = min(idx, len(self.terms) - 1)
        term = self.terms[idx]
        return term, (1 if term.coefficient > 0 else -1)

    def tensor(self, other: "QuasiDecomposition") -> "QuasiDecomposition":
        """Decomposition of the joint target; self's parties occupy the low qubits."""
        terms = []
        for t1 in self.terms:
            a1 = materialize(t1.state_a)
            b1 = materialize(t1.state_b)
            for t2 in other.terms:
                a = DensityOperator._trusted(np.kron(materialize(t2.state_a).matrix, a1.matrix))
                b = DensityOperator._trusted(np.kron(materialize(t2.state_b).matrix, b1.matrix))
                terms.append(ProductTerm(t1.coefficient * t2.coefficient, a, b))
        target = None
        if self.target is not None and other.target is not None:
            # joint ordering (A1 A2 | B1 B2) with each party's own blocks stacked
            target = _pair_target(self, other)
        return QuasiDecomposition(terms, target)

    def __len__(self) -> int:
        return len(self.terms)


def _pair_target(d1: QuasiDecomposition, d2: QuasiDecomposition) -> DensityOperator:
    acc = None
    for t1 in d1.terms:
        for t2 in d2.terms:
            a = np.kron(materialize(t2.state_a).matrix, materialize(t1.state_a).matrix)
            b = np.kron(materialize(t2.state_b).matrix, materialize(t1.state_b).matrix)
            contrib = t1.coefficient * t2.coefficient * np.kron(b, a)
            acc = contrib if acc is None else acc + contrib
    return DensityOperator._trusted(acc)


def z_factor(decomp: QuasiDecomposition) -> float:
    return decomp.z_factor


def reconstruct(decomp: QuasiDecomposition) -> DensityOperator:
    return decomp.reconstruct()


def sample_term(decomp: QuasiDecomposition, rng: np.random.Generator) -> tuple[ProductTerm, int]:
    return decomp.sample_term(rng)


def bell_state() -> DensityOperator:
    """|B+><B+| on two qubits (party A = qubit 0, party B = qubit 1)."""
    amps = np.zeros(4, dtype=complex)
    amps[0b00] = amps[0b11] = 1.0 / math.sqrt(2.0)
    return PureState(amps).to_density()


def forge_bell() -> QuasiDecomposition:
    """Six-term Pauli-eigenstate forging of the Bell pair; Z = 3 exactly.

    Coefficients +1/2 on matched z and x eigenstate pairs, -1/2 on matched y
    pairs. All coefficients and the Z sum are exact in binary floating point.
    """
    terms = []
    for axis, sign in ((Axis.Z, 0.5), (Axis.X, 0.5), (Axis.Y, -0.5)):
        for outcome in (0, 1):
            label = PauliLabel(axis, outcome)
            terms.append(ProductTerm(sign, label, label))
    return QuasiDecomposition(terms, bell_state())


@dataclass(frozen=True)
class SchmidtForm:
    """Pure bipartite state (U ⊗ V) sum_i lambda_i |ii>, lambdas positive, descending."""

    lambdas: tuple[float, ...]
    unitary_a: np.ndarray | None = None
    unitary_b: np.ndarray | None = None

    def __post_init__(self):
        lambdas = tuple(float(v) for v in self.lambdas)
        if not lambdas or any(v <= 0 for v in lambdas):
            raise DecompositionError("Schmidt coefficients must be positive")
        if list(lambdas) != sorted(lambdas, reverse=True):
            raise DecompositionError("Schmidt coefficients must be descending")
        if abs(sum(v * v for v in lambdas) - 1.0) > 1e-10:
            raise DecompositionError("Schmidt coefficients must satisfy sum lambda_i^2 = 1")
        dim = self.local_dim_for(len(lambdas))
        if dim > 4:
            raise DecompositionError("local dimension above 4 is out of scope")
        ua = np.eye(dim, dtype=complex) if self.unitary_a is None else np.asarray(self.unitary_a, dtype=complex)
        ub = np.eye(dim, dtype=complex) if self.unitary_b is None else np.asarray(self.unitary_b, dtype=complex)
        for name, u in (("unitary_a", ua), ("unitary_b", ub)):
            if u.shape != (dim, dim):
                raise DecompositionError(f"{name} must be {dim}x{dim} for {len(lambdas)} coefficients")
            if np.max(np.abs(u.conj().T @ u - np.eye(dim))) > 1e-10:
                raise DecompositionError(f"{name} is not unitary")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "unitary_a", ua)
        object.__setattr__(self, "unitary_b", ub)

    @staticmethod
    def local_dim_for(num_coeffs: int) -> int:
        dim = 2
        while dim < num_coeffs:
            dim *= 2
        return dim

    @property
    def local_dim(self) -> int:
        return self.unitary_a.shape[0]

    def state_vector(self) -> np.ndarray:
        dim = self.local_dim
        vec = np.zeros(dim * dim, dtype=complex)
        for i, lam in enumerate(self.lambdas):
            vec[i + dim * i] = lam  # A on low bits, B on high bits
        return np.kron(self.unitary_b, self.unitary_a) @ vec

    def density(self) -> DensityOperator:
        vec = self.state_vector()
        return DensityOperator._trusted(np.outer(vec, vec.conj()))


def _cross_vector(dim: int, i: int, j: int, p: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=complex)
    vec[i] = 1.0
    vec[j] = 1j**p
    return vec / math.sqrt(2.0)


def forge_schmidt(form: SchmidtForm) -> QuasiDecomposition:
    """Pseudomixture of a Schmidt-form pure state; Z = 1 + 4 sum_{j<i} lambda_i lambda_j."""
    dim = form.local_dim
    ua, ub = form.unitary_a, form.unitary_b
    terms: list[ProductTerm] = []

    def side_state(unitary: np.ndarray, vec: np.ndarray) -> TermState:
        out = unitary @ vec
        label = as_label(out)
        return label if label is not None else PureState(out)

    for i, lam in enumerate(form.lambdas):
        basis = np.zeros(dim, dtype=complex)
        basis[i] = 1.0
        terms.append(ProductTerm(lam * lam, side_state(ua, basis), side_state(ub, basis)))
    for i in range(len(form.lambdas)):
        for j in range(i):
            weight = form.lambdas[i] * form.lambdas[j]
            for p in range(4):
                vec = _cross_vector(dim, i, j, p)
                terms.append(ProductTerm((-1) ** p * weight,
                                         side_state(ua, vec), side_state(ub, vec)))
    return QuasiDecomposition(terms, form.density())
