"""Worker endpoint: runs one party's local program and nothing else.

A worker never sees the other party's state or program. In exact mode it
streams one BRANCH_RESULT per requested label combination (trace weight and
local Pauli expectations only); in sampled mode it answers per-shot
measure/prepare requests, Born-sampling outcomes from a per-shot substream
of its session seed, so a session is a deterministic function of the
messages it receives plus that seed.
"""

from __future__ import annotations

import itertools
import socket
from dataclasses import dataclass

import numpy as np

from .. import wirecut
from ..circuit import CircuitError, LocalProgram
from ..observables import ObservableError, PauliObservable
from ..qsim import Axis
from ..sampler import ProgramSampler, ShotWalker
from .messages import MessageError, make_message
from .transport import TcpTransport, TransportError, parse_bind

_AXES = {a.value: a for a in Axis}


class ProtocolViolation(Exception):
    def __init__(self, code: str, detail: str):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}")


@dataclass
class _SessionState:
    session_id: str | None = None
    program: LocalProgram | None = None
    observables: list[PauliObservable] | None = None
    session_seed: int = 0
    sampler: ProgramSampler | None = None
    walker: ShotWalker | None = None
    shot_rng: np.random.Generator | None = None


class WorkerSession:
    """One request/response session over one transport."""

    def __init__(self, role: str, transport):
        if role not in ("alice", "bob"):
            raise ValueError(f"role must be alice or bob, got {role!r}")
        self.role = role
        self.transport = transport
        self.state = _SessionState()
        self._recv_seq = -1
        self._send_seq = -1

    # -- plumbing ----------------------------------------------------------

    def _send(self, msg_type: str, payload: dict) -> None:
        self._send_seq += 1
        self.transport.send(make_message(self.state.session_id or "?", self._send_seq,
                                         msg_type, payload))

    def _check_incoming(self, message: dict) -> None:
        if message["seq_no"] != self._recv_seq + 1:
            raise ProtocolViolation(
                "seq_gap", f"expected seq {self._recv_seq + 1}, got {message['seq_no']}")
        self._recv_seq = message["seq_no"]
        if self.state.session_id is None:
            self.state.session_id = message["session_id"]
        elif message["session_id"] != self.state.session_id:
            raise ProtocolViolation("session_mismatch", "session id changed mid-stream")

    # -- handlers ----------------------------------------------------------

    def _handle_hello(self, payload: dict) -> None:
        self._send("HELLO", {"role": self.role, "ack": True})

    def _handle_load_program(self, payload: dict) -> None:
        try:
            program = LocalProgram.from_json(payload["program"])
        except (KeyError, CircuitError) as exc:
            raise ProtocolViolation("bad_program", str(exc)) from None
        if program.role != self.role:
            raise ProtocolViolation("bad_program",
                                    f"program role {program.role} is not {self.role}")
        try:
            observables = [PauliObservable.from_spec(s, program.num_payload)
                           for s in payload.get("observables", [])]
        except ObservableError as exc:
            raise ProtocolViolation("bad_observable", str(exc)) from None
        self.state.program = program
        self.state.observables = observables
        self.state.session_seed = int(payload.get("session_seed", 0))
        first = observables[0] if observables else None
        self.state.sampler = ProgramSampler(program, first)
        self._send("DONE", {"loaded": True})

    def _require_program(self) -> LocalProgram:
        if self.state.program is None:
            raise ProtocolViolation("no_program", "LOAD_PROGRAM must come first")
        return self.state.program

    def _handle_execute(self, payload: dict) -> None:
        mode = payload.get("mode")
        if mode == "exact":
            self._execute_exact(payload)
        elif mode == "shot":
            self._execute_shot(payload)
        elif mode == "measure":
            self._execute_measure(payload)
        elif mode == "payload":
            self._execute_payload(payload)
        else:
            raise ProtocolViolation("bad_mode", f"unknown execute mode {mode!r}")

    def _execute_exact(self, payload: dict) -> None:
        program = self._require_program()
        branches = payload.get("branches", "all")
        if branches == "all":
            combos = [(m, p)
                      for m in itertools.product(wirecut.LABELS, repeat=program.num_cuts)
                      for p in itertools.product(wirecut.LABELS, repeat=program.num_cuts)]
        else:
            combos = [tuple(tuple((int(b), Axis(a)) for b, a in side) for side in key)
                      for key in branches]
        for measured, prepared in combos:
            branch = wirecut.run_branch(program, measured, prepared)
            expectations = {obs.to_string(): obs.expectation_density(branch.state)
                            for obs in self.state.observables or []}
            self._send("BRANCH_RESULT", {
                "measured": [[b, a.value] for b, a in measured],
                "prepared": [[b, a.value] for b, a in prepared],
                "trace_weight": branch.trace_weight,
                "expectations": expectations})
        self._send("DONE", {"count": len(combos)})

    def _execute_shot(self, payload: dict) -> None:
        self._require_program()
        shot = int(payload["shot"])
        self.state.walker = self.state.sampler.walker()
        self.state.shot_rng = np.random.Generator(
            np.random.Philox(key=[self.state.session_seed, shot]))
        self._send("DONE", {"shot": shot})

    def _walker(self) -> ShotWalker:
        if self.state.walker is None:
            raise ProtocolViolation("no_shot", "EXECUTE mode=shot must come first")
        return self.state.walker

    def _execute_measure(self, payload: dict) -> None:
        walker = self._walker()
        cut = int(payload["cut"])
        axis = _AXES.get(payload.get("axis"))
        if axis is None:
            raise ProtocolViolation("bad_axis", f"unknown axis {payload.get('axis')!r}")
        outcome = walker.measure(cut, axis, self.state.shot_rng.random())
        self._send("MEASURED", {"cut": cut, "outcome": outcome, "axis": axis.value})

    def _execute_payload(self, payload: dict) -> None:
        walker = self._walker()
        bits, eigenvalue = walker.sample_payload(self.state.shot_rng.random())
        self._send("MEASURED", {"payload_bits": bits, "eigenvalue": eigenvalue})

    def _handle_prepare(self, payload: dict) -> None:
        walker = self._walker()
        cut = int(payload["cut"])
        outcome = int(payload["outcome"])
        axis = _AXES.get(payload.get("axis"))
        if axis is None or outcome not in (0, 1):
            raise ProtocolViolation("bad_label", f"invalid preparation {payload}")
        walker.prepare(cut, outcome, axis)
        self._send("DONE", {"cut": cut})

    # -- main loop ---------------------------------------------------------

    def run(self) -> None:
        handlers = {"HELLO": self._handle_hello,
                    "LOAD_PROGRAM": self._handle_load_program,
                    "EXECUTE": self._handle_execute,
                    "PREPARE": self._handle_prepare}
        while True:
            try:
                message, _ = self.transport.recv()
            except (TransportError, MessageError):
                break  # peer gone or stream corrupt; nothing sane left to say
            if message["type"] == "DONE":
                self._recv_seq = message["seq_no"]
                break
            try:
                self._check_incoming(message)
                handler = handlers.get(message["type"])
                if handler is None:
                    raise ProtocolViolation("bad_type",
                                            f"unexpected message type {message['type']}")
                handler(message["payload"])
            except ProtocolViolation as exc:
                try:
                    self._send("ERROR", {"code": exc.code, "detail": exc.detail})
                except TransportError:
                    pass
                break
        self.transport.close()


def serve_worker(role: str, transport) -> None:
    """Run one session on an already-connected transport (blocking)."""
    WorkerSession(role, transport).run()


def serve_worker_tcp(role: str, bind: str | None = None, *, ready=None,
                     timeout: float = 30.0) -> None:
    """Listen on host:port (FORGECUT_BIND or 127.0.0.1:0), serve one session.

    ``ready(host, port)`` is called with the bound address before accepting,
    so callers using an ephemeral port can learn it.
    """
    host, port = parse_bind(bind)
    server = socket.create_server((host, port))
    server.settimeout(timeout)
    bound_host, bound_port = server.getsockname()[:2]
    if ready is not None:
        ready(bound_host, bound_port)
    try:
        conn, _ = server.accept()
    except OSError as exc:
        server.close()
        raise TransportError(f"accept failed: {exc}") from None
    try:
        serve_worker(role, TcpTransport(conn, timeout))
    finally:
        server.close()
