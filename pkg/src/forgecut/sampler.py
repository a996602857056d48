"""Monte Carlo estimation on cut circuits by signed label sampling.

Each shot draws every cut's measurement axis uniformly from {x, y, z} (weight
3 per axis choice, two choices per cut), runs the local programs with Born
sampling of the measured bits, pairs each measured label with the partner
preparation through the transition rule (same bit for x and z, flipped bit
for y, sign -1 on y), samples the payload observable eigenvalue o, and
accumulates

    c = 3^(2L) * epsilon * o,

an unbiased estimate of <O>. Outcome bits are sampled inside the simulated
local programs, not enumerated, so the estimator walks the same
measure/transmit/prepare path the distributed protocol does; deterministic
states along a label path are memoized, which changes nothing statistically.

Randomness is counter-based: shot i consumes exactly the uniforms
[i*k, (i+1)*k) of a Philox stream keyed by the master seed (k = 4L + 2), so
results are reproducible and independent of batching or scheduling.
Aggregation uses numpy's pairwise summation over the shot-ordered
contribution array.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .circuit import CutPlan, LocalProgram, PartitionedCircuit, circuit_hash, split_local
from .observables import PauliObservable
from .qsim import Axis, PureState
from .wirecut import axis_sign, paired_bit

_AXES = (Axis.X, Axis.Y, Axis.Z)


class SamplerError(ValueError):
    """Invalid sampling request."""


def overhead(num_nonlocal: int) -> int:
    """Sampling-cost multiplier 9^L (= 3^(2L)) for L cut gates."""
    if num_nonlocal < 0:
        raise SamplerError("gate count must be nonnegative")
    return 9**num_nonlocal


@dataclass(frozen=True)
class ShotRecord:
    """Full label trace of one shot."""

    alice_axes: tuple[Axis, ...]      # measurement axes on the cut wires
    alice_bits: tuple[int, ...]
    bob_prep_bits: tuple[int, ...]    # paired from (alice_bits, alice_axes)
    bob_axes: tuple[Axis, ...]        # measurement axes on the transported wires
    bob_bits: tuple[int, ...]
    alice_prep_bits: tuple[int, ...]  # paired from (bob_bits, bob_axes)
    sign: int
    eigenvalue: int
    contribution: float


@dataclass(frozen=True)
class EstimatorReport:
    """Estimate plus the bookkeeping needed to reproduce and sanity-check it."""

    mean: float
    stderr: float
    shots: int
    overhead: int
    seed: int
    circuit_hash: str
    elapsed_seconds: float
    contribution_min: float
    contribution_max: float

    def to_json(self) -> str:
        payload = {"mean": self.mean, "stderr": self.stderr, "shots": self.shots,
                   "overhead": self.overhead, "seed": self.seed,
                   "circuit_hash": self.circuit_hash,
                   "elapsed_seconds": self.elapsed_seconds,
                   "contribution_min": self.contribution_min,
                   "contribution_max": self.contribution_max}
        return json.dumps(payload, sort_keys=True)


@dataclass
class VarianceReport:
    variance: float
    stderr: float
    max_abs_contribution: float
    bound: float
    violations: int


def variance_report(contributions: np.ndarray, num_nonlocal: int,
                    norm_inf: float = 1.0) -> VarianceReport:
    """Sample variance plus the per-shot bound check |c| <= 9^L * norm(O)."""
    contributions = np.asarray(contributions, dtype=float)
    if contributions.size < 2:
        raise SamplerError("variance needs at least 2 shots")
    bound = overhead(num_nonlocal) * norm_inf + 1e-12
    max_abs = float(np.max(np.abs(contributions)))
    violations = int(np.sum(np.abs(contributions) > bound))
    var = float(np.var(contributions, ddof=1))
    return VarianceReport(var, math.sqrt(var / contributions.size), max_abs, bound, violations)


# ---------------------------------------------------------------------------
# memoized stepwise program execution (pure states)
# ---------------------------------------------------------------------------

class ProgramSampler:
    """Per-shot walker factory over one local program, with shared path caches.

    A path is the tuple of cut events consumed so far, each
    ("m", cut, outcome, axis) or ("p", cut, outcome, axis) in program op
    order. All states reached along a path are deterministic, so they are
    cached; Born draws use the cached outcome distributions.
    """

    def __init__(self, program: LocalProgram, observable: PauliObservable | None):
        self.program = program
        self.observable = observable
        from .circuit import _STATE_NAMES
        states = [qsim.pauli_eigenstate(*_STATE_NAMES[name]) for name in program.initial]
        self._initial = PureState.product(states)
        self._states: dict = {}        # path -> (PureState, op_index) paused before a cut op
        self._measures: dict = {}      # (path, axis) -> (p0, collapsed0, collapsed1)
        self._payload: dict = {}       # path -> (cumulative probs, eigenvalues)
        self._payload_axes = [program.register_size - 1 - s for s in program.payload_slots]

    def _advance(self, state: PureState, op_index: int) -> tuple[PureState, int]:
        ops = self.program.ops
        while op_index < len(ops) and ops[op_index].kind == "gate":
            state = qsim.apply_unitary(state, ops[op_index].gate)
            op_index += 1
        return state, op_index

    def _state_at(self, path: tuple) -> tuple[PureState, int]:
        try:
            return self._states[path]
        except KeyError:
            pass
        if not path:
            entry = self._advance(self._initial, 0)
        else:
            prev_state, op_index = self._state_at(path[:-1])
            kind, cut, outcome, axis = path[-1]
            op = self.program.ops[op_index]
            if kind == "m":
                if op.kind != "measure_cut" or op.cut != cut:
                    raise SamplerError(f"path event {path[-1]} does not match op {op}")
                p0, c0, c1 = self._measure_table(path[:-1], axis)
                entry = self._advance(c0 if outcome == 0 else c1, op_index + 1)
            else:
                if op.kind != "prepare_cut" or op.cut != cut:
                    raise SamplerError(f"path event {path[-1]} does not match op {op}")
                if op.source == "measured":
                    m_out, m_axis = self._measured_label(path[:-1], cut)
                    src = qsim._EIGENVECTORS[(m_axis, m_out)]
                    src_perp = qsim._EIGENVECTORS[(m_axis, 1 - m_out)]
                else:
                    src = np.array([1, 0], dtype=complex)
                    src_perp = np.array([0, 1], dtype=complex)
                to_vec = qsim._EIGENVECTORS[(axis, outcome)]
                to_perp = qsim._EIGENVECTORS[(axis, 1 - outcome)]
                prep = np.outer(to_vec, src.conj()) + np.outer(to_perp, src_perp.conj())
                amps = qsim._apply_vec(prev_state.amplitudes, prep, (op.slot,),
                                       self.program.register_size)
                entry = self._advance(PureState(amps, subnormalized=True), op_index + 1)
        self._states[path] = entry
        return entry

    def _measured_label(self, path: tuple, cut: int) -> tuple[int, Axis]:
        for kind, c, outcome, axis in reversed(path):
            if kind == "m" and c == cut:
                return outcome, axis
        raise SamplerError(f"prepare from 'measured' but cut {cut} was never measured")

    def _measure_table(self, path: tuple, axis: Axis):
        key = (path, axis)
        try:
            return self._measures[key]
        except KeyError:
            pass
        state, op_index = self._state_at(path)
        op = self.program.ops[op_index]
        if op.kind != "measure_cut":
            raise SamplerError(f"program paused at {op.kind}, expected a measurement")
        b0, p0 = qsim.project_pure(state, qsim.ProjectorSpec(axis, 0, op.slot))
        b1, p1 = qsim.project_pure(state, qsim.ProjectorSpec(axis, 1, op.slot))
        total = p0 + p1
        c0 = PureState(b0.amplitudes / math.sqrt(p0), subnormalized=True) if p0 > 0 else b0
        c1 = PureState(b1.amplitudes / math.sqrt(p1), subnormalized=True) if p1 > 0 else b1
        entry = (p0 / total, c0, c1)
        self._measures[key] = entry
        return entry

    def _payload_table(self, path: tuple):
        try:
            return self._payload[path]
        except KeyError:
            pass
        state, op_index = self._state_at(path)
        if op_index != len(self.program.ops):
            raise SamplerError("payload sampling requested before the program finished")
        if self.observable is not None:
            for gate in self.observable.rotation_gates():
                slot = self.program.payload_slots[gate.targets[0]]
                state = qsim.apply_unitary(state, gate.on(slot))
        probs = np.abs(state.amplitudes) ** 2
        tensor = probs.reshape((2,) * self.program.register_size)
        marginal = _payload_marginal_reorder(tensor, self._payload_axes)
        flat = marginal.reshape(-1)
        flat = flat / flat.sum()
        cumulative = np.cumsum(flat)
        num = self.program.num_payload
        if self.observable is not None:
            eigen = np.array([self.observable.eigenvalue(bits) for bits in range(2**num)])
        else:
            eigen = np.ones(2**num, dtype=int)
        entry = (cumulative, eigen)
        self._payload[path] = entry
        return entry

    def walker(self) -> "ShotWalker":
        return ShotWalker(self)


def _payload_marginal_reorder(prob_tensor: np.ndarray, payload_axes: list[int]) -> np.ndarray:
    """Marginal over payload axes, output axes ordered payload bit k-1 .. 0."""
    n = prob_tensor.ndim
    other = tuple(a for a in range(n) if a not in payload_axes)
    kept = [a for a in range(n) if a in payload_axes]  # ascending axis order
    marginal = prob_tensor.sum(axis=other) if other else prob_tensor
    # marginal axes correspond to `kept`; we need axis order payload bit (k-1..0),
    # i.e. payload_axes reversed-by-bit-significance
    desired = list(reversed(payload_axes))  # bit k-1 first (most significant)
    perm = [kept.index(a) for a in desired]
    return np.transpose(marginal, perm)


class ShotWalker:
    """One shot's stepwise walk through a program; all heavy state is cached."""

    __slots__ = ("sampler", "path")

    def __init__(self, sampler: ProgramSampler):
        self.sampler = sampler
        self.path = ()

    def measure(self, cut: int, axis: Axis, uniform: float) -> int:
        p0, _, _ = self.sampler._measure_table(self.path, axis)
        outcome = 0 if uniform < p0 else 1
        self.path = self.path + (("m", cut, outcome, axis),)
        return outcome

    def prepare(self, cut: int, outcome: int, axis: Axis) -> None:
        self.path = self.path + (("p", cut, outcome, axis),)

    def sample_payload(self, uniform: float) -> tuple[int, int]:
        """Returns (payload bits as int, observable eigenvalue)."""
        cumulative, eigen = self.sampler._payload_table(self.path)
        idx = int(np.searchsorted(cumulative, uniform, side="right"))
        idx = min(idx, len(eigen) - 1)
        return idx, int(eigen[idx])


# ---------------------------------------------------------------------------
# the estimator
# ---------------------------------------------------------------------------

def shot_uniforms(seed, start_shot: int, num_shots: int, per_shot: int) -> np.ndarray:
    """Uniforms for shots [start, start+num): fixed-width slices of one Philox stream.

    ``per_shot`` must be a multiple of 4 so that shot boundaries align with
    Philox counter steps (one step yields four 64-bit words, one per double);
    that makes the slice for shot i independent of batching.
    """
    if per_shot % 4:
        raise SamplerError("per-shot draw width must be a multiple of 4")
    bit_gen = np.random.Philox(key=seed)
    bit_gen.advance(start_shot * per_shot // 4)
    return np.random.Generator(bit_gen).random((num_shots, per_shot))


def draws_per_shot(num_cuts: int) -> int:
    # 4 per cut (two axis choices, two Born draws) + 2 payload draws, padded
    # to a Philox counter-step boundary
    needed = 4 * num_cuts + 2
    return needed + (-needed) % 4


def run_shots(prog_a: LocalProgram, prog_b: LocalProgram, obs_a: PauliObservable,
              obs_b: PauliObservable, shots: int, seed: int, *,
              collect_records: bool = False,
              record_sink=None) -> tuple[np.ndarray, list[ShotRecord]]:
    """Contribution array (and optionally full records) for the given programs."""
    num_cuts = prog_a.num_cuts
    mult = overhead(num_cuts)
    sampler_a = ProgramSampler(prog_a, obs_a)
    sampler_b = ProgramSampler(prog_b, obs_b)
    per_shot = draws_per_shot(num_cuts)
    contributions = np.empty(shots)
    records: list[ShotRecord] = []
    chunk = 1 << 14
    for start in range(0, shots, chunk):
        count = min(chunk, shots - start)
        uniforms = shot_uniforms(seed, start, count, per_shot)
        for row in range(count):
            u = uniforms[row]
            walker_a = sampler_a.walker()
            walker_b = sampler_b.walker()
            sign = 1
            a_axes, a_bits, b_axes, b_bits = [], [], [], []
            jp, lp = [], []
            idx = 0
            for cut in range(num_cuts):
                alpha = _AXES[min(int(u[idx] * 3), 2)]
                idx += 1
                i = walker_a.measure(cut, alpha, u[idx])
                idx += 1
                j = paired_bit(alpha, i)
                walker_b.prepare(cut, j, alpha)
                mu = _AXES[min(int(u[idx] * 3), 2)]
                idx += 1
                k = walker_b.measure(cut, mu, u[idx])
                idx += 1
                l = paired_bit(mu, k)
                walker_a.prepare(cut, l, mu)
                sign *= axis_sign(alpha) * axis_sign(mu)
                a_axes.append(alpha)
                a_bits.append(i)
                b_axes.append(mu)
                b_bits.append(k)
                jp.append(j)
                lp.append(l)
            s_a, eig_a = walker_a.sample_payload(u[idx])
            s_b, eig_b = walker_b.sample_payload(u[idx + 1])
            o = eig_a * eig_b
            c = mult * sign * o
            contributions[start + row] = c
            if collect_records or record_sink is not None:
                record = ShotRecord(tuple(a_axes), tuple(a_bits), tuple(jp),
                                    tuple(b_axes), tuple(b_bits), tuple(lp),
                                    sign, o, float(c))
                if collect_records:
                    records.append(record)
                if record_sink is not None:
                    record_sink(start + row, record, s_a, s_b)
    return contributions, records


def run_sampled(circuit: PartitionedCircuit, observable, shots: int, seed: int, *,
                plan: CutPlan | None = None,
                collect_records: bool = False) -> EstimatorReport | tuple[EstimatorReport, list[ShotRecord]]:
    """Unbiased sampled estimate of a product-Pauli observable on the cut circuit."""
    if shots < 1:
        raise SamplerError("shots must be at least 1")
    t0 = time.perf_counter()
    obs = PauliObservable.from_spec(observable, circuit.total_qubits)
    plan = plan or CutPlan()
    if plan.side != "alice":
        raise SamplerError("sampled mode runs on alice-side cut plans")
    if plan.substitution == "swap":
        # the swap-conjugated program prepares before it measures, which the
        # interleaved LOCC flow cannot honor (labels arrive mid-circuit)
        raise SamplerError("sampled mode needs relabel substitution or the reuse policy")
    prog_a, prog_b = split_local(circuit, plan)
    obs_a, obs_b = obs.split(circuit.alice_qubits)
    contributions, records = run_shots(prog_a, prog_b, obs_a, obs_b, shots, seed,
                                       collect_records=collect_records)
    mean = float(np.sum(contributions) / shots)
    stderr = float(np.std(contributions, ddof=1) / math.sqrt(shots)) if shots > 1 else float("inf")
    report = EstimatorReport(
        mean=mean, stderr=stderr, shots=shots, overhead=overhead(circuit.num_nonlocal),
        seed=seed, circuit_hash=circuit_hash(circuit),
        elapsed_seconds=time.perf_counter() - t0,
        contribution_min=float(np.min(np.abs(contributions))),
        contribution_max=float(np.max(np.abs(contributions))))
    if collect_records:
        return report, records
    return report
