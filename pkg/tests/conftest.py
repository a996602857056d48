import numpy as np
import pytest

from forgecut import circuit, qsim


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def bell_circuit() -> circuit.PartitionedCircuit:
    """m = n = 1, V = CNOT, identity local layers, initial |+>|0>."""
    return circuit.PartitionedCircuit(
        1, 1, (circuit.NonlocalGate(qsim.cnot(0, 1), 0, 0),), ("+",), ("0",))


@pytest.fixture
def bell():
    return bell_circuit()


def kron_embed(op: np.ndarray, targets, n: int) -> np.ndarray:
    """Independent dense embedding oracle: explicit kron + index bookkeeping.

    Deliberately avoids the package's tensor-contraction kernels: builds the
    full 2^n matrix by summing dyadics over all index pairs.
    """
    dim = 2**n
    k = len(targets)
    full = np.zeros((dim, dim), dtype=complex)
    for row in range(dim):
        for col in range(dim):
            # op only connects indices that differ on the target bits
            if any(((row >> q) & 1) != ((col >> q) & 1)
                   for q in range(n) if q not in targets):
                continue
            r = sum(((row >> q) & 1) << (k - 1 - j) for j, q in enumerate(targets))
            c = sum(((col >> q) & 1) << (k - 1 - j) for j, q in enumerate(targets))
            full[row, col] = op[r, c]
    return full
