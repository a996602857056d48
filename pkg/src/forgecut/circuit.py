"""Partitioned two-party circuits: parsing, validation, splitting, flattening.

A circuit is an alternating stack of party-local layers and nonlocal gates,
(V2A ⊗ V2B) ∘ V ∘ (V1A ⊗ V1B) in the single-gate case. Alice owns global
qubits [0, m), Bob owns [m, m+n). Each nonlocal gate touches exactly one
Alice qubit and one Bob qubit.

``split_local`` compiles the circuit plus a :class:`CutPlan` into two local
programs with measure/prepare slots at each cut: Alice measures the cut wire
before the gate and hosts the returned wire after it; Bob prepares the
transported wire, applies the nonlocal gate locally, and measures the wire
out. Wire substitution is done either by relabelling slots or by an explicit
swap conjugation; both versions are generated from the same plan and agree.

Document grammar (JSON, UTF-8)::

    {
      "alice_qubits": 1, "bob_qubits": 1,
      "initial": {"alice": ["+"], "bob": ["0"]},          # optional
      "layers": [
        {"type": "local", "party": "A",
         "gates": [{"name": "h", "targets": [0]}]},
        {"type": "nonlocal", "gate": {"name": "cnot"},
         "alice_target": 0, "bob_target": 0}
      ]
    }

Gate names: i x y z h s sdg rx ry rz cnot cz controlled-u matrix. Angles are
radians in "params"; complex entries are [re, im] pairs in "matrix".
Targets inside a local layer are party-local indices.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import qsim
from .qsim import Axis, PureState, UnitaryGate


class CircuitError(ValueError):
    """Malformed circuit document or inconsistent circuit/plan."""


_STATE_NAMES = {
    "0": (Axis.Z, 0), "1": (Axis.Z, 1),
    "+": (Axis.X, 0), "-": (Axis.X, 1),
    "+i": (Axis.Y, 0), "-i": (Axis.Y, 1),
}

_NAMED_1Q = {"i": qsim.identity, "x": qsim.x, "y": qsim.y, "z": qsim.z,
             "h": qsim.h, "s": qsim.s, "sdg": qsim.sdg}
_NAMED_1Q_PARAM = {"rx": qsim.rx, "ry": qsim.ry, "rz": qsim.rz}
_NAMED_2Q = {"cnot": qsim.cnot, "cz": qsim.cz}


def _complex_to_pairs(mat: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(mat, dtype=complex)]


def _pairs_to_complex(pairs) -> np.ndarray:
    try:
        return np.array([[complex(p[0], p[1]) for p in row] for row in pairs])
    except (TypeError, IndexError) as exc:
        raise CircuitError(f"matrix entries must be [re, im] pairs: {exc}") from None


def build_gate(spec: dict, targets: tuple[int, ...]) -> UnitaryGate:
    """Build a gate from a document-level spec bound to the given targets."""
    name = spec.get("name", "matrix" if "matrix" in spec else None)
    params = spec.get("params", [])
    try:
        if name in _NAMED_1Q:
            if len(targets) != 1:
                raise CircuitError(f"gate '{name}' takes 1 target, got {targets}")
            return _NAMED_1Q[name](*targets)
        if name in _NAMED_1Q_PARAM:
            if len(params) != 1:
                raise CircuitError(f"gate '{name}' takes 1 angle parameter")
            if len(targets) != 1:
                raise CircuitError(f"gate '{name}' takes 1 target, got {targets}")
            return _NAMED_1Q_PARAM[name](float(params[0]), *targets)
        if name in _NAMED_2Q:
            if len(targets) != 2:
                raise CircuitError(f"gate '{name}' takes 2 targets, got {targets}")
            return _NAMED_2Q[name](*targets)
        if name == "controlled-u":
            if len(targets) != 2:
                raise CircuitError("controlled-u takes 2 targets (control, target)")
            return qsim.controlled(_pairs_to_complex(spec["matrix"]), *targets)
        if name == "matrix":
            mat = _pairs_to_complex(spec["matrix"])
            arity = len(targets)
            if mat.shape != (2**arity, 2**arity):
                raise CircuitError(f"raw matrix shape {mat.shape} does not fit {arity} targets "
                                   "(gates above 2 qubits are not supported)")
            return qsim.gate_from_matrix(mat, targets)
    except qsim.GateError as exc:
        raise CircuitError(str(exc)) from None
    except KeyError as exc:
        raise CircuitError(f"gate spec missing field {exc}") from None
    raise CircuitError(f"unknown gate name {name!r}")


def gate_to_spec(gate: UnitaryGate) -> dict:
    """Document-level spec for a gate (named form when the name is in the vocabulary)."""
    if gate.name in _NAMED_1Q or gate.name in _NAMED_2Q:
        return {"name": gate.name}
    # rx/ry/rz and controlled-u lose their parameters at the UnitaryGate level,
    # so they serialize as raw matrices; parse(serialize) is still exact.
    return {"name": "matrix", "matrix": _complex_to_pairs(gate.matrix)}


@dataclass(frozen=True)
class LocalLayer:
    """Ordered gates on one party's qubits (party-local target indices)."""

    party: str  # "A" or "B"
    gates: tuple[UnitaryGate, ...]

    def __post_init__(self):
        if self.party not in ("A", "B"):
            raise CircuitError(f"party must be 'A' or 'B', got {self.party!r}")


@dataclass(frozen=True)
class NonlocalGate:
    """A 2-qubit gate across the partition; matrix index 0 is the Alice factor."""

    gate: UnitaryGate  # targets ignored; bound at use sites
    alice_target: int
    bob_target: int

    def __post_init__(self):
        if self.gate.arity != 2:
            raise CircuitError("nonlocal gate must be a 2-qubit gate")


@dataclass(frozen=True)
class PartitionedCircuit:
    alice_qubits: int
    bob_qubits: int
    layers: tuple
    initial_alice: tuple[str, ...] = ()
    initial_bob: tuple[str, ...] = ()

    def __post_init__(self):
        m, n = self.alice_qubits, self.bob_qubits
        if m < 1 or n < 1:
            raise CircuitError("each party needs at least one qubit")
        init_a = tuple(self.initial_alice) or ("0",) * m
        init_b = tuple(self.initial_bob) or ("0",) * n
        if len(init_a) != m or len(init_b) != n:
            raise CircuitError("initial state length does not match qubit counts")
        for name in init_a + init_b:
            if name not in _STATE_NAMES:
                raise CircuitError(f"unknown initial state name {name!r}")
        object.__setattr__(self, "initial_alice", init_a)
        object.__setattr__(self, "initial_bob", init_b)
        object.__setattr__(self, "layers", tuple(self._normalize_layers(self.layers)))
        self._validate()

    @staticmethod
    def _normalize_layers(layers) -> list:
        # pad with empty local layers so the stack starts and ends locally and
        # no two nonlocal gates are adjacent without a (possibly empty) layer
        out: list = []
        for layer in layers:
            if isinstance(layer, NonlocalGate):
                if not out or isinstance(out[-1], NonlocalGate):
                    out.append(LocalLayer("A", ()))
                out.append(layer)
            elif isinstance(layer, LocalLayer):
                out.append(layer)
            else:
                raise CircuitError(f"unexpected layer object {layer!r}")
        if not out or isinstance(out[-1], NonlocalGate):
            out.append(LocalLayer("A", ()))
        return out

    def _validate(self):
        m, n = self.alice_qubits, self.bob_qubits
        for layer in self.layers:
            if isinstance(layer, LocalLayer):
                limit = m if layer.party == "A" else n
                for gate in layer.gates:
                    for q in gate.targets:
                        if not 0 <= q < limit:
                            raise CircuitError(
                                f"gate {gate.name} target {q} outside party {layer.party}'s "
                                f"{limit} qubits (gates crossing the partition must be nonlocal)")
            else:
                if not 0 <= layer.alice_target < m:
                    raise CircuitError(f"nonlocal alice_target {layer.alice_target} out of range")
                if not 0 <= layer.bob_target < n:
                    raise CircuitError(f"nonlocal bob_target {layer.bob_target} out of range")

    @property
    def nonlocal_gates(self) -> list[NonlocalGate]:
        return [l for l in self.layers if isinstance(l, NonlocalGate)]

    @property
    def num_nonlocal(self) -> int:
        return len(self.nonlocal_gates)

    @property
    def total_qubits(self) -> int:
        return self.alice_qubits + self.bob_qubits

    def initial_state(self) -> PureState:
        states = [qsim.pauli_eigenstate(*_STATE_NAMES[s]) for s in self.initial_alice + self.initial_bob]
        return PureState.product(states)


# ---------------------------------------------------------------------------
# document parsing / serialization
# ---------------------------------------------------------------------------

def parse_circuit(document) -> PartitionedCircuit:
    """Parse a circuit document (dict, JSON string, or path to a JSON file)."""
    if isinstance(document, (str, Path)):
        if isinstance(document, Path) or not str(document).lstrip().startswith("{"):
            path = Path(document)
            if not path.exists():
                raise CircuitError(f"circuit file not found: {path}")
            text = path.read_text()
        else:
            text = str(document)
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CircuitError(f"malformed circuit document: {exc}") from None
    if not isinstance(document, dict):
        raise CircuitError("circuit document must be a JSON object")
    try:
        m = int(document["alice_qubits"])
        n = int(document["bob_qubits"])
        raw_layers = document["layers"]
    except KeyError as exc:
        raise CircuitError(f"circuit document missing field {exc}") from None
    layers = []
    for entry in raw_layers:
        kind = entry.get("type")
        if kind == "local":
            gates = tuple(build_gate(g, tuple(g.get("targets", ()))) for g in entry.get("gates", ()))
            layers.append(LocalLayer(entry.get("party", "A"), gates))
        elif kind == "nonlocal":
            gate = build_gate(entry["gate"], (0, 1))
            layers.append(NonlocalGate(gate, int(entry["alice_target"]), int(entry["bob_target"])))
        else:
            raise CircuitError(f"unknown layer type {kind!r}")
    initial = document.get("initial", {})
    return PartitionedCircuit(m, n, tuple(layers),
                              tuple(initial.get("alice", ())), tuple(initial.get("bob", ())))


def serialize_circuit(circuit: PartitionedCircuit) -> dict:
    layers = []
    for layer in circuit.layers:
        if isinstance(layer, LocalLayer):
            layers.append({"type": "local", "party": layer.party,
                           "gates": [dict(gate_to_spec(g), targets=list(g.targets)) for g in layer.gates]})
        else:
            layers.append({"type": "nonlocal", "gate": gate_to_spec(layer.gate),
                           "alice_target": layer.alice_target, "bob_target": layer.bob_target})
    return {"alice_qubits": circuit.alice_qubits, "bob_qubits": circuit.bob_qubits,
            "initial": {"alice": list(circuit.initial_alice), "bob": list(circuit.initial_bob)},
            "layers": layers}


def circuit_hash(circuit: PartitionedCircuit) -> str:
    canonical = json.dumps(serialize_circuit(circuit), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# full-circuit oracle
# ---------------------------------------------------------------------------

def flatten_full(circuit: PartitionedCircuit) -> list[UnitaryGate]:
    """Layer-ordered gate sequence on the joint register (Bob offset by m)."""
    m = circuit.alice_qubits
    out = []
    for layer in circuit.layers:
        if isinstance(layer, LocalLayer):
            offset = 0 if layer.party == "A" else m
            out.extend(g.on(*(q + offset for q in g.targets)) for g in layer.gates)
        else:
            out.append(layer.gate.on(layer.alice_target, m + layer.bob_target))
    return out


def simulate_full(circuit: PartitionedCircuit, initial: PureState | None = None) -> PureState:
    """Full statevector simulation of the uncut circuit; the recombination oracle."""
    state = circuit.initial_state() if initial is None else initial
    if state.num_qubits != circuit.total_qubits:
        raise CircuitError("initial state size does not match circuit")
    for gate in flatten_full(circuit):
        state = qsim.apply_unitary(state, gate)
    return state


# ---------------------------------------------------------------------------
# cut plans and local programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutPlan:
    """Where and how the identity channels are inserted around nonlocal gates.

    ``policy="fresh"`` gives every cut its own return-wire ancilla on Alice
    and transport ancilla on Bob (2L auxiliary qubits in total for L gates);
    ``policy="reuse"`` resets the just-measured Alice wire and re-prepares it
    in place (L auxiliary qubits in total, all on Bob). ``substitution``
    selects relabelled wires or explicit swap conjugation; both agree.
    ``side="bob"`` mirrors the construction onto Bob's wire.
    """

    policy: str = "fresh"
    substitution: str = "relabel"
    side: str = "alice"

    def __post_init__(self):
        if self.policy not in ("fresh", "reuse"):
            raise CircuitError(f"unknown ancilla policy {self.policy!r}")
        if self.substitution not in ("relabel", "swap"):
            raise CircuitError(f"unknown substitution mode {self.substitution!r}")
        if self.side not in ("alice", "bob"):
            raise CircuitError(f"unknown cut side {self.side!r}")
        if self.policy == "reuse" and self.substitution == "swap":
            raise CircuitError("swap substitution requires fresh ancillas")

    def total_auxiliary(self, num_gates: int) -> int:
        return (2 if self.policy == "fresh" else 1) * num_gates


@dataclass(frozen=True)
class ProgramOp:
    kind: str  # "gate" | "measure_cut" | "prepare_cut"
    gate: UnitaryGate | None = None
    cut: int | None = None
    slot: int | None = None
    source: str | None = None  # prepare_cut: "zero" | "measured"


@dataclass(frozen=True)
class LocalProgram:
    """One party's local circuit with measure/prepare slots at the cuts."""

    role: str  # "alice" | "bob"
    num_payload: int
    register_size: int
    num_cuts: int
    initial: tuple[str, ...]      # per-slot initial state names
    ops: tuple[ProgramOp, ...]
    payload_slots: tuple[int, ...]  # final physical slot of each logical payload qubit
    traced_slots: tuple[int, ...]   # dead wires to drop at the end
    cut_party: bool = True          # True if this party's wire hosts the cuts

    def validate(self):
        for op in self.ops:
            slots = op.gate.targets if op.kind == "gate" else (op.slot,)
            for q in slots:
                if not 0 <= q < self.register_size:
                    raise CircuitError(
                        f"{self.role} program touches slot {q} outside its "
                        f"{self.register_size}-qubit register")
        if len(self.initial) != self.register_size:
            raise CircuitError("program initial state does not cover the register")

    def to_json(self) -> dict:
        ops = []
        for op in self.ops:
            if op.kind == "gate":
                ops.append(dict(gate_to_spec(op.gate), kind="gate", targets=list(op.gate.targets)))
            else:
                entry = {"kind": op.kind, "cut": op.cut, "slot": op.slot}
                if op.source is not None:
                    entry["source"] = op.source
                ops.append(entry)
        return {"role": self.role, "num_payload": self.num_payload,
                "register_size": self.register_size, "num_cuts": self.num_cuts,
                "initial": list(self.initial), "ops": ops,
                "payload_slots": list(self.payload_slots),
                "traced_slots": list(self.traced_slots), "cut_party": self.cut_party}

    @classmethod
    def from_json(cls, doc: dict) -> "LocalProgram":
        try:
            ops = []
            for entry in doc["ops"]:
                if entry["kind"] == "gate":
                    ops.append(ProgramOp("gate", gate=build_gate(entry, tuple(entry["targets"]))))
                else:
                    ops.append(ProgramOp(entry["kind"], cut=int(entry["cut"]),
                                         slot=int(entry["slot"]), source=entry.get("source")))
            program = cls(doc["role"], int(doc["num_payload"]), int(doc["register_size"]),
                          int(doc["num_cuts"]), tuple(doc["initial"]), tuple(ops),
                          tuple(doc["payload_slots"]), tuple(doc["traced_slots"]),
                          bool(doc.get("cut_party", True)))
        except (KeyError, TypeError) as exc:
            raise CircuitError(f"malformed program document: {exc}") from None
        program.validate()
        return program


def mirror_circuit(circuit: PartitionedCircuit) -> PartitionedCircuit:
    """Swap the parties (Bob becomes the cut side); nonlocal gate factors swap too."""
    swap_perm = qsim.swap(0, 1).matrix
    layers = []
    for layer in circuit.layers:
        if isinstance(layer, LocalLayer):
            layers.append(LocalLayer("A" if layer.party == "B" else "B", layer.gates))
        else:
            flipped = qsim.gate_from_matrix(swap_perm @ layer.gate.matrix @ swap_perm, (0, 1),
                                            layer.gate.name)
            layers.append(NonlocalGate(flipped, layer.bob_target, layer.alice_target))
    return PartitionedCircuit(circuit.bob_qubits, circuit.alice_qubits, tuple(layers),
                              circuit.initial_bob, circuit.initial_alice)


def split_local(circuit: PartitionedCircuit, plan: CutPlan | None = None) -> tuple[LocalProgram, LocalProgram]:
    """Compile into (alice_program, bob_program) with per-cut measure/prepare slots.

    With ``plan.side == "bob"`` the mirrored circuit is split instead and the
    returned programs have their roles swapped back, so the caller's notion of
    which party is which is preserved while the cut machinery runs on Bob's
    wire. Recombination output qubit order follows the program roles.
    """
    plan = plan or CutPlan()
    if plan.side == "bob":
        import dataclasses
        prog_cutter, prog_other = _split_alice_side(mirror_circuit(circuit), plan)
        # the mirror's alice is the caller's bob; relabel so each worker
        # recognizes its own role, keeping cut_party on the real cut side
        alice = dataclasses.replace(prog_other, role="alice", cut_party=False)
        bob = dataclasses.replace(prog_cutter, role="bob", cut_party=True)
        return alice, bob
    return _split_alice_side(circuit, plan)


def _split_alice_side(circuit: PartitionedCircuit, plan: CutPlan) -> tuple[LocalProgram, LocalProgram]:
    m, n, num_cuts = circuit.alice_qubits, circuit.bob_qubits, circuit.num_nonlocal

    # Alice: payload slots [0, m); fresh policy appends one return-wire slot per cut.
    a_register = m + (num_cuts if plan.policy == "fresh" else 0)
    a_initial = list(circuit.initial_alice) + ["0"] * (a_register - m)
    wire_map = {q: q for q in range(m)}  # logical Alice qubit -> current physical slot
    a_ops: list[ProgramOp] = []
    a_traced: list[int] = []
    next_fresh = m

    # Bob: payload slots [0, n); one transport slot per cut.
    b_register = n + num_cuts
    b_initial = list(circuit.initial_bob) + ["0"] * num_cuts
    b_ops: list[ProgramOp] = []
    b_traced: list[int] = []

    cut_index = 0
    for layer in circuit.layers:
        if isinstance(layer, LocalLayer):
            if layer.party == "A":
                a_ops.extend(ProgramOp("gate", gate=g.on(*(wire_map[q] for q in g.targets)))
                             for g in layer.gates)
            else:
                b_ops.extend(ProgramOp("gate", gate=g) for g in layer.gates)
            continue

        wire = wire_map[layer.alice_target]
        if plan.policy == "reuse":
            a_ops.append(ProgramOp("measure_cut", cut=cut_index, slot=wire))
            a_ops.append(ProgramOp("prepare_cut", cut=cut_index, slot=wire, source="measured"))
        elif plan.substitution == "relabel":
            fresh = next_fresh
            next_fresh += 1
            a_ops.append(ProgramOp("measure_cut", cut=cut_index, slot=wire))
            a_ops.append(ProgramOp("prepare_cut", cut=cut_index, slot=fresh, source="zero"))
            wire_map[layer.alice_target] = fresh
            a_traced.append(wire)
        else:  # swap conjugation: prepare fresh, swap it onto the wire, measure the old state
            fresh = next_fresh
            next_fresh += 1
            a_ops.append(ProgramOp("prepare_cut", cut=cut_index, slot=fresh, source="zero"))
            a_ops.append(ProgramOp("gate", gate=qsim.swap(wire, fresh)))
            a_ops.append(ProgramOp("measure_cut", cut=cut_index, slot=fresh))
            a_traced.append(fresh)

        transport = n + cut_index
        b_ops.append(ProgramOp("prepare_cut", cut=cut_index, slot=transport, source="zero"))
        b_ops.append(ProgramOp("gate", gate=layer.gate.on(transport, layer.bob_target)))
        b_ops.append(ProgramOp("measure_cut", cut=cut_index, slot=transport))
        b_traced.append(transport)
        cut_index += 1

    alice = LocalProgram("alice", m, a_register, num_cuts, tuple(a_initial), tuple(a_ops),
                         tuple(wire_map[q] for q in range(m)), tuple(a_traced), True)
    bob = LocalProgram("bob", n, b_register, num_cuts, tuple(b_initial), tuple(b_ops),
                       tuple(range(n)), tuple(b_traced), False)
    alice.validate()
    bob.validate()
    return alice, bob


# ---------------------------------------------------------------------------
# random circuit generator (demos and stress tests)
# ---------------------------------------------------------------------------

def random_circuit(alice_qubits: int, bob_qubits: int, num_nonlocal: int,
                   rng: np.random.Generator) -> PartitionedCircuit:
    """Random local layers around random nonlocal 4x4 unitaries."""

    def local_layer(party: str, size: int) -> LocalLayer:
        gates = [qsim.gate_from_matrix(qsim.random_unitary(2, rng), (q,)) for q in range(size)]
        if size >= 2:
            pair = rng.permutation(size)[:2]
            gates.append(qsim.gate_from_matrix(qsim.random_unitary(4, rng),
                                               (int(pair[0]), int(pair[1]))))
        return LocalLayer(party, tuple(gates))

    layers: list = []
    for _ in range(num_nonlocal):
        layers.append(local_layer("A", alice_qubits))
        layers.append(local_layer("B", bob_qubits))
        gate = qsim.gate_from_matrix(qsim.random_unitary(4, rng), (0, 1))
        layers.append(NonlocalGate(gate, int(rng.integers(alice_qubits)),
                                   int(rng.integers(bob_qubits))))
    layers.append(local_layer("A", alice_qubits))
    layers.append(local_layer("B", bob_qubits))
    return PartitionedCircuit(alice_qubits, bob_qubits, tuple(layers))


def bundled_circuit_path(name: str) -> Path:
    """Path of a packaged example circuit (bell.json, two_gate.json)."""
    return Path(__file__).parent / "circuits" / name
