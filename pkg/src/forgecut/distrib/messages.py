"""Wire format and schema audit for the classical channel.

One JSON object per line, UTF-8:

    {"session_id": ..., "seq_no": ..., "type": ..., "payload": {...}}

Runtime messages (everything after LOAD_PROGRAM) may carry only labels,
bits, counts, and real scalars bounded by 9^L times the observable norm;
in particular nothing shaped like a state vector. LOAD_PROGRAM is the one
message allowed to contain complex entries, and only inside gate-definition
fields of the program document (the circuit is public classical data; the
quantum state never crosses). The audit enforces exactly that.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

MESSAGE_TYPES = ("HELLO", "LOAD_PROGRAM", "PREPARE", "EXECUTE", "MEASURED",
                 "BRANCH_RESULT", "DONE", "ERROR")

_AXIS_NAMES = ("x", "y", "z")
_MAX_STRING = 128


class MessageError(ValueError):
    """Malformed or schema-violating message."""


def make_message(session_id: str, seq_no: int, msg_type: str, payload: dict) -> dict:
    if msg_type not in MESSAGE_TYPES:
        raise MessageError(f"unknown message type {msg_type!r}")
    return {"session_id": session_id, "seq_no": seq_no, "type": msg_type,
            "payload": payload}


def encode_message(message: dict) -> bytes:
    line = json.dumps(message, sort_keys=True, separators=(",", ":"))
    if "\n" in line:
        raise MessageError("message serialization must be single-line")
    return line.encode("utf-8") + b"\n"


def decode_line(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MessageError(f"undecodable message line: {exc}") from None
    for key in ("session_id", "seq_no", "type", "payload"):
        if key not in message:
            raise MessageError(f"message missing field {key!r}")
    if message["type"] not in MESSAGE_TYPES:
        raise MessageError(f"unknown message type {message['type']!r}")
    if not isinstance(message["payload"], dict):
        raise MessageError("payload must be an object")
    return message


# ---------------------------------------------------------------------------
# schema audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    ok: bool
    messages_checked: int
    bound: float
    violations: list[str] = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        out = [f"{status}: {self.messages_checked} messages audited, "
               f"scalar bound {self.bound:g}, {len(self.violations)} violation(s)"]
        out.extend(f"  - {v}" for v in self.violations[:20])
        return "\n".join(out)


def _is_label_pair(value) -> bool:
    return (isinstance(value, list) and len(value) == 2
            and value[0] in (0, 1) and value[1] in _AXIS_NAMES)


def _audit_scalar(value, where: str, bound: float, violations: list[str]) -> None:
    if isinstance(value, bool) or value is None:
        return
    if isinstance(value, int):
        return  # classical counters/labels/seeds; integers cannot carry amplitudes
    if isinstance(value, float):
        if abs(value) > bound + 1e-9:
            violations.append(f"{where}: scalar {value} exceeds bound {bound:g}")
        return
    if isinstance(value, str):
        if len(value) > _MAX_STRING:
            violations.append(f"{where}: string longer than {_MAX_STRING} chars")
        return
    violations.append(f"{where}: unexpected value type {type(value).__name__}")


def _audit_runtime_payload(msg_type: str, payload: dict, bound: float,
                           num_cuts: int, violations: list[str]) -> None:
    max_list = max(2, num_cuts)
    for key, value in payload.items():
        where = f"{msg_type}.{key}"
        if isinstance(value, dict):
            # one level of keyed scalars (e.g. expectations per Pauli string)
            for sub_key, sub_val in value.items():
                _audit_scalar(sub_val, f"{where}.{sub_key}", bound, violations)
                if isinstance(sub_val, (list, dict)):
                    violations.append(f"{where}.{sub_key}: nested container")
        elif isinstance(value, list):
            if _is_label_pair(value):
                continue
            if len(value) > max_list:
                violations.append(
                    f"{where}: array of length {len(value)} exceeds label width {max_list}")
            for item in value:
                if isinstance(item, list):
                    if not _is_label_pair(item):
                        violations.append(f"{where}: nested array is not a (bit, axis) label")
                else:
                    _audit_scalar(item, where, bound, violations)
        else:
            _audit_scalar(value, where, bound, violations)


def _audit_program_doc(doc, violations: list[str]) -> None:
    if not isinstance(doc, dict):
        violations.append("LOAD_PROGRAM.program: not an object")
        return
    for op in doc.get("ops", ()):
        matrix = op.get("matrix")
        if matrix is None:
            continue
        if not (isinstance(matrix, list) and len(matrix) <= 4
                and all(isinstance(row, list) and len(row) <= 4 for row in matrix)
                and all(isinstance(entry, list) and len(entry) == 2 for row in matrix for entry in row)):
            violations.append("LOAD_PROGRAM: gate matrix field is not a <=4x4 [re,im] table")
    for key in ("initial", "payload_slots", "traced_slots"):
        seq = doc.get(key, ())
        if not isinstance(seq, list) or len(seq) > 64:
            violations.append(f"LOAD_PROGRAM.program.{key}: malformed")


def audit_message(message: dict, bound: float, num_cuts: int,
                  violations: list[str]) -> None:
    msg_type = message["type"]
    payload = message["payload"]
    if msg_type == "LOAD_PROGRAM":
        _audit_program_doc(payload.get("program"), violations)
        for key, value in payload.items():
            if key in ("program",):
                continue
            if key == "observables":
                if not (isinstance(value, list) and all(isinstance(s, str) for s in value)):
                    violations.append("LOAD_PROGRAM.observables: not a list of Pauli strings")
                continue
            _audit_scalar(value, f"LOAD_PROGRAM.{key}", float("inf"), violations)
        return
    _audit_runtime_payload(msg_type, payload, bound, num_cuts, violations)


def audit_transcript(entries, norm_inf: float = 1.0) -> AuditReport:
    """Audit transcript entries (dicts with a 'message' field, or raw messages).

    The scalar bound is 9^L * norm_inf with L read from the transmitted
    programs; before any program is seen the bound is norm_inf.
    """
    violations: list[str] = []
    num_cuts = 0
    checked = 0
    bound = norm_inf
    for entry in entries:
        message = entry.get("message", entry) if isinstance(entry, dict) else entry
        try:
            message = decode_line(message) if isinstance(message, (str, bytes)) else message
            if not isinstance(message, dict) or "type" not in message:
                raise MessageError("not a message")
        except MessageError as exc:
            violations.append(str(exc))
            continue
        if message["type"] == "LOAD_PROGRAM":
            program = message["payload"].get("program") or {}
            num_cuts = max(num_cuts, int(program.get("num_cuts", 0)))
            bound = (9**num_cuts) * norm_inf
        audit_message(message, bound, max(num_cuts, 1), violations)
        checked += 1
    return AuditReport(not violations, checked, bound, violations)
