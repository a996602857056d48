"""LOCC execution harness: two local workers joined by a classical channel.

The coordinator owns all randomness and recombines; workers run only their
own local programs and answer with labels, bits, and bounded real scalars.
Messages are newline-delimited JSON so transcripts stay human-auditable, and
the schema audit proves no runtime payload can carry quantum state.
"""

from .messages import AuditReport, MessageError, audit_transcript, decode_line, encode_message
from .transport import (LoopbackTransport, ReplayTransport, TcpTransport, TransportError,
                        connect_tcp, loopback_pair)
from .worker import WorkerSession, serve_worker, serve_worker_tcp
from .coordinator import (CoordinationError, Coordinator, ExactRunResult, SampledRunResult,
                          Transcript, coordinate_exact, coordinate_sampled, replay_transcript)

__all__ = [
    "AuditReport", "MessageError", "audit_transcript", "decode_line", "encode_message",
    "LoopbackTransport", "ReplayTransport", "TcpTransport", "TransportError",
    "connect_tcp", "loopback_pair",
    "WorkerSession", "serve_worker", "serve_worker_tcp",
    "CoordinationError", "Coordinator", "ExactRunResult", "SampledRunResult",
    "Transcript", "coordinate_exact", "coordinate_sampled", "replay_transcript",
]
