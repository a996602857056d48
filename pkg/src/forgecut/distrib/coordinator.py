"""Coordinator: drives both workers, pairs labels, and recombines.

The coordinator owns every random choice (axes per cut per shot, from a
Philox stream keyed by the master seed) and hands each worker a private
session seed inside LOAD_PROGRAM, so a whole run is a deterministic function
of (circuit, observable, seed) regardless of transport. Every message both
ways lands in a transcript; replaying a transcript re-executes the
coordinator against the recorded worker responses and must reproduce both
the outgoing bytes and the final result exactly.
"""

from __future__ import annotations

import itertools
import json
import math
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import qsim, wirecut
from ..circuit import (CircuitError, CutPlan, PartitionedCircuit, circuit_hash, split_local)
from ..observables import PauliObservable
from ..qsim import Axis, DensityOperator
from ..sampler import EstimatorReport, SamplerError, draws_per_shot, overhead, shot_uniforms
from .messages import make_message
from .transport import ReplayTransport, TransportError

_AXES = (Axis.X, Axis.Y, Axis.Z)


class CoordinationError(RuntimeError):
    """Session failed; carries the partial transcript for post-mortem."""

    def __init__(self, detail: str, transcript: "Transcript | None" = None):
        super().__init__(detail)
        self.transcript = transcript


@dataclass
class Transcript:
    """Ordered record of every message, both directions, with sizes and times."""

    header: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)

    def add(self, direction: str, peer: str, message: dict, nbytes: int) -> None:
        self.entries.append({"dir": direction, "peer": peer, "t": time.time(),
                             "bytes": nbytes, "message": message})

    def for_peer(self, peer: str) -> list[dict]:
        return [e for e in self.entries if e["peer"] == peer]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"header": self.header}, sort_keys=True) + "\n")
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Transcript":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise CoordinationError(f"empty transcript file {path}")
        header = json.loads(lines[0]).get("header", {})
        entries = [json.loads(line) for line in lines[1:]]
        return cls(header, entries)


class Coordinator:
    """Message plumbing shared by the exact and sampled drivers."""

    def __init__(self, endpoints: dict, session_id: str | None = None):
        self.endpoints = endpoints
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.transcript = Transcript()
        self._send_seq = {peer: -1 for peer in endpoints}
        self._recv_seq = {peer: -1 for peer in endpoints}

    def send(self, peer: str, msg_type: str, payload: dict) -> None:
        self._send_seq[peer] += 1
        message = make_message(self.session_id, self._send_seq[peer], msg_type, payload)
        try:
            data = self.endpoints[peer].send(message)
        except TransportError as exc:
            raise CoordinationError(f"send to {peer} failed: {exc}", self.transcript) from None
        self.transcript.add("send", peer, message, len(data))

    def recv(self, peer: str) -> dict:
        try:
            message, data = self.endpoints[peer].recv()
        except TransportError as exc:
            raise CoordinationError(f"recv from {peer} failed: {exc}", self.transcript) from None
        self.transcript.add("recv", peer, message, len(data))
        if message["seq_no"] != self._recv_seq[peer] + 1:
            raise CoordinationError(
                f"seq gap from {peer}: expected {self._recv_seq[peer] + 1}, "
                f"got {message['seq_no']}", self.transcript)
        self._recv_seq[peer] = message["seq_no"]
        if message["type"] == "ERROR":
            raise CoordinationError(
                f"{peer} reported {message['payload'].get('code')}: "
                f"{message['payload'].get('detail')}", self.transcript)
        return message

    def request(self, peer: str, msg_type: str, payload: dict, expect: str) -> dict:
        self.send(peer, msg_type, payload)
        reply = self.recv(peer)
        if reply["type"] != expect:
            raise CoordinationError(
                f"{peer} answered {reply['type']}, expected {expect}", self.transcript)
        return reply

    def hello(self) -> None:
        for peer in self.endpoints:
            reply = self.request(peer, "HELLO", {"role": peer}, "HELLO")
            if reply["payload"].get("role") != peer:
                raise CoordinationError(f"{peer} endpoint announced role "
                                        f"{reply['payload'].get('role')}", self.transcript)

    def finish(self) -> None:
        for peer, endpoint in self.endpoints.items():
            try:
                self.send(peer, "DONE", {})
            except CoordinationError:
                pass
            endpoint.close()


def _session_seed(seed: int, peer: str) -> int:
    tag = {"alice": 1, "bob": 2}[peer]
    return int(np.random.SeedSequence((seed, tag)).generate_state(1, dtype=np.uint64)[0])


def _label_key(pairs) -> tuple:
    return tuple((int(b), Axis(a)) for b, a in pairs)


# ---------------------------------------------------------------------------
# exact mode
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactRunResult:
    values: dict                  # observable string -> recombined expectation
    state: DensityOperator | None  # reconstructed joint state, if requested
    transcript: Transcript


def _pauli_strings(num_qubits: int) -> list[str]:
    return ["".join(chars) for chars in itertools.product("IXYZ", repeat=num_qubits)]


def _pauli_basis_matrix(string: str) -> np.ndarray:
    mat = np.array([[1.0 + 0j]])
    lookup = {"I": qsim.PAULI_I, "X": qsim.PAULI_X, "Y": qsim.PAULI_Y, "Z": qsim.PAULI_Z}
    for ch in string:  # char k = qubit k; build little-endian (later chars higher)
        mat = np.kron(lookup[ch], mat)
    return mat


def coordinate_exact(circuit: PartitionedCircuit, observables, endpoints: dict, *,
                     plan: CutPlan | None = None, seed: int = 0,
                     session_id: str | None = None, reconstruct_state: bool = False,
                     retries: int = 1) -> ExactRunResult:
    """Distributed branch enumeration and signed recombination.

    ``observables`` is a list of global Pauli specs. With
    ``reconstruct_state=True`` the full local Pauli bases are requested and
    the joint output state is rebuilt from branch expectations alone (the
    classical channel still carries nothing but labels and bounded reals).
    """
    plan = plan or CutPlan()
    if plan.side != "alice":
        raise CircuitError("distributed coordination runs on alice-side cut plans")
    prog_a, prog_b = split_local(circuit, plan)
    num_cuts = circuit.num_nonlocal
    globals_split = []
    want_a, want_b = set(), set()
    for spec in observables:
        obs = PauliObservable.from_spec(spec, circuit.total_qubits)
        obs_a, obs_b = obs.split(circuit.alice_qubits)
        globals_split.append((obs.to_string(), obs_a.to_string(), obs_b.to_string()))
        want_a.add(obs_a.to_string())
        want_b.add(obs_b.to_string())
    if reconstruct_state:
        want_a.update(_pauli_strings(prog_a.num_payload))
        want_b.update(_pauli_strings(prog_b.num_payload))

    coordinator = Coordinator(endpoints, session_id)
    coordinator.transcript.header = {
        "mode": "exact", "seed": seed, "session_id": coordinator.session_id,
        "circuit_hash": circuit_hash(circuit), "observables": [s for s, _, _ in globals_split],
        "reconstruct_state": reconstruct_state,
        "plan": {"policy": plan.policy, "substitution": plan.substitution, "side": plan.side}}
    try:
        coordinator.hello()
        programs = {"alice": prog_a, "bob": prog_b}
        wants = {"alice": sorted(want_a), "bob": sorted(want_b)}
        for peer in ("alice", "bob"):
            coordinator.request(peer, "LOAD_PROGRAM", {
                "program": programs[peer].to_json(),
                "session_seed": _session_seed(seed, peer),
                "observables": wants[peer]}, "DONE")

        expected_keys = [(m, p)
                         for m in itertools.product(wirecut.LABELS, repeat=num_cuts)
                         for p in itertools.product(wirecut.LABELS, repeat=num_cuts)]
        results = {"alice": {}, "bob": {}}
        for peer in ("alice", "bob"):
            _collect_branches(coordinator, peer, {"mode": "exact", "branches": "all"},
                              results[peer])
            for attempt in range(retries):
                missing = [key for key in expected_keys if key not in results[peer]]
                if not missing:
                    break
                wire_keys = [[[[b, a.value] for b, a in side] for side in key] for key in missing]
                _collect_branches(coordinator, peer,
                                  {"mode": "exact", "branches": wire_keys}, results[peer])
            missing = [key for key in expected_keys if key not in results[peer]]
            if missing:
                raise CoordinationError(
                    f"{peer} left {len(missing)} branches unanswered after retry",
                    coordinator.transcript)

        values = {}
        for name, name_a, name_b in globals_split:
            total = 0.0
            for a_meas, b_prep, b_meas, a_prep, sign in wirecut._pairing_iter(num_cuts):
                wa, ea = results["alice"][(a_meas, a_prep)]
                wb, eb = results["bob"][(b_meas, b_prep)]
                total += sign * ea[name_a] * eb[name_b]
            values[name] = total
        state = _reconstruct_state(results, programs, num_cuts) if reconstruct_state else None
    finally:
        coordinator.finish()
    return ExactRunResult(values, state, coordinator.transcript)


def _collect_branches(coordinator: Coordinator, peer: str, payload: dict,
                      sink: dict) -> None:
    coordinator.send(peer, "EXECUTE", payload)
    while True:
        message = coordinator.recv(peer)
        if message["type"] == "DONE":
            return
        if message["type"] != "BRANCH_RESULT":
            raise CoordinationError(f"{peer} sent {message['type']} mid-stream",
                                    coordinator.transcript)
        body = message["payload"]
        key = (_label_key(body["measured"]), _label_key(body["prepared"]))
        sink[key] = (float(body["trace_weight"]),
                     {k: float(v) for k, v in body["expectations"].items()})


def _reconstruct_state(results: dict, programs: dict, num_cuts: int) -> DensityOperator:
    """Joint state from branch Pauli expectations: rho = 2^-p sum <P> P per branch."""
    mats = {}
    for peer in ("alice", "bob"):
        p = programs[peer].num_payload
        basis = [(s, _pauli_basis_matrix(s)) for s in _pauli_strings(p)]
        peer_mats = {}
        for key, (_, expectations) in results[peer].items():
            acc = np.zeros((2**p, 2**p), dtype=complex)
            for string, mat in basis:
                acc += expectations[string] * mat
            peer_mats[key] = acc / 2**p
        mats[peer] = peer_mats
    acc = None
    for a_meas, b_prep, b_meas, a_prep, sign in wirecut._pairing_iter(num_cuts):
        rho_a = mats["alice"][(a_meas, a_prep)]
        rho_b = mats["bob"][(b_meas, b_prep)]
        term = sign * np.kron(rho_b, rho_a)
        acc = term if acc is None else acc + term
    return DensityOperator(acc, subnormalized=True)


# ---------------------------------------------------------------------------
# sampled mode
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampledRunResult:
    report: EstimatorReport
    transcript: Transcript


def coordinate_sampled(circuit: PartitionedCircuit, observable, shots: int, seed: int,
                       endpoints: dict, *, plan: CutPlan | None = None,
                       session_id: str | None = None) -> SampledRunResult:
    """Distributed shot loop: only labels and eigenvalues cross the channel."""
    if shots < 1:
        raise SamplerError("shots must be at least 1")
    plan = plan or CutPlan()
    if plan.side != "alice" or plan.substitution == "swap":
        raise SamplerError("sampled coordination needs an alice-side relabel/reuse plan")
    t0 = time.perf_counter()
    prog_a, prog_b = split_local(circuit, plan)
    num_cuts = circuit.num_nonlocal
    obs = PauliObservable.from_spec(observable, circuit.total_qubits)
    obs_a, obs_b = obs.split(circuit.alice_qubits)
    mult = overhead(num_cuts)

    coordinator = Coordinator(endpoints, session_id)
    coordinator.transcript.header = {
        "mode": "sampled", "seed": seed, "shots": shots,
        "session_id": coordinator.session_id, "circuit_hash": circuit_hash(circuit),
        "observable": obs.to_string(),
        "plan": {"policy": plan.policy, "substitution": plan.substitution, "side": plan.side}}
    per_shot = draws_per_shot(num_cuts)
    contributions = np.empty(shots)
    try:
        coordinator.hello()
        for peer, prog, local_obs in (("alice", prog_a, obs_a), ("bob", prog_b, obs_b)):
            coordinator.request(peer, "LOAD_PROGRAM", {
                "program": prog.to_json(),
                "session_seed": _session_seed(seed, peer),
                "observables": [local_obs.to_string()]}, "DONE")
        chunk = 1 << 12
        for start in range(0, shots, chunk):
            count = min(chunk, shots - start)
            uniforms = shot_uniforms([seed, 0xA1], start, count, per_shot)
            for row in range(count):
                u = uniforms[row]
                shot = start + row
                for peer in ("alice", "bob"):
                    coordinator.request(peer, "EXECUTE", {"mode": "shot", "shot": shot}, "DONE")
                sign = 1
                for cut in range(num_cuts):
                    alpha = _AXES[min(int(u[4 * cut] * 3), 2)]
                    reply = coordinator.request("alice", "EXECUTE",
                                                {"mode": "measure", "cut": cut,
                                                 "axis": alpha.value}, "MEASURED")
                    i = int(reply["payload"]["outcome"])
                    coordinator.request("bob", "PREPARE",
                                        {"cut": cut, "outcome": wirecut.paired_bit(alpha, i),
                                         "axis": alpha.value}, "DONE")
                    mu = _AXES[min(int(u[4 * cut + 2] * 3), 2)]
                    reply = coordinator.request("bob", "EXECUTE",
                                                {"mode": "measure", "cut": cut,
                                                 "axis": mu.value}, "MEASURED")
                    k = int(reply["payload"]["outcome"])
                    coordinator.request("alice", "PREPARE",
                                        {"cut": cut, "outcome": wirecut.paired_bit(mu, k),
                                         "axis": mu.value}, "DONE")
                    sign *= wirecut.axis_sign(alpha) * wirecut.axis_sign(mu)
                eig = 1
                for peer in ("alice", "bob"):
                    reply = coordinator.request(peer, "EXECUTE", {"mode": "payload"}, "MEASURED")
                    eig *= int(reply["payload"]["eigenvalue"])
                contributions[shot] = mult * sign * eig
    finally:
        coordinator.finish()
    mean = float(np.sum(contributions) / shots)
    stderr = float(np.std(contributions, ddof=1) / math.sqrt(shots)) if shots > 1 else float("inf")
    report = EstimatorReport(mean=mean, stderr=stderr, shots=shots, overhead=mult,
                             seed=seed, circuit_hash=circuit_hash(circuit),
                             elapsed_seconds=time.perf_counter() - t0,
                             contribution_min=float(np.min(np.abs(contributions))),
                             contribution_max=float(np.max(np.abs(contributions))))
    return SampledRunResult(report, coordinator.transcript)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def replay_transcript(transcript: Transcript, circuit: PartitionedCircuit):
    """Re-run the coordinator against the recorded responses.

    Raises on any divergence; returns the same result type as the original
    run. The recorded seed and session id are reused, so outgoing messages
    must match byte-for-byte.
    """
    header = transcript.header
    if circuit_hash(circuit) != header.get("circuit_hash"):
        raise CoordinationError("transcript was recorded for a different circuit")
    endpoints = {peer: ReplayTransport(transcript.for_peer(peer))
                 for peer in ("alice", "bob")}
    plan = CutPlan(**header.get("plan", {}))
    if header.get("mode") == "exact":
        return coordinate_exact(circuit, header.get("observables", []), endpoints,
                                plan=plan, seed=header.get("seed", 0),
                                session_id=header["session_id"],
                                reconstruct_state=header.get("reconstruct_state", False))
    if header.get("mode") == "sampled":
        return coordinate_sampled(circuit, header["observable"], header["shots"],
                                  header["seed"], endpoints, plan=plan,
                                  session_id=header["session_id"])
    raise CoordinationError(f"transcript has unknown mode {header.get('mode')!r}")
