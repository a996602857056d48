"""Readout-noise injection, assignment-matrix calibration/inversion, and the
mitigated cut-circuit pipeline.

The assignment matrix A maps ideal to noisy outcome probabilities,
P_error(s) = sum_s' A(s, s') P(s'), columns summing to one; mitigation
applies A^{-1}. For the cut protocol the measured bits of one party are its
payload bits plus each cut's measured bit, so A spans that joint outcome
space (tensor-factorized per bit by default, dense supported to 6 bits).

Per-configuration statistics drive the recombination. A configuration is
(measurement axes, prepared labels) for one party; conditioning on it is
measurable because both are known classically per shot. The recombined joint
is

    P(s_A, s_B) = sum over paired labels of sign * q_A(s_A, i | config_A)
                                              * q_B(s_B, k | config_B)

with q the (mitigated) per-configuration outcome distributions, which carry
the Born weights of the measured cut bits. The fully normalized conditionals
P(s | i, labels) — the joint divided by its s-marginal — are also produced,
per label, as the standard diagnostic tables; the recombination itself
consumes the weight-carrying q, which is what makes the noiseless pipeline
exact (see the decisions notes on the conditional normalization).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import qsim, sampler as sampler_mod
from .circuit import CutPlan, LocalProgram, PartitionedCircuit, split_local
from .observables import PauliObservable
from .qsim import Axis
from .wirecut import LABELS, axis_sign, config_distribution, paired_bit

_AXES = (Axis.X, Axis.Y, Axis.Z)

CONDITION_LIMIT = 1e6


class MitigationError(ValueError):
    """Invalid mitigation input."""


class IllConditionedError(MitigationError):
    """Assignment matrix too close to singular to invert."""


@dataclass(frozen=True)
class ReadoutNoiseModel:
    """Independent per-bit readout flips: eps01 = P(read 1 | true 0), eps10 = P(read 0 | true 1)."""

    flips: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for e01, e10 in self.flips:
            if not (0.0 <= e01 < 0.5 and 0.0 <= e10 < 0.5):
                raise MitigationError(f"flip probabilities must lie in [0, 0.5), got {(e01, e10)}")

    @classmethod
    def symmetric(cls, eps: float, num_bits: int) -> "ReadoutNoiseModel":
        return cls(((eps, eps),) * num_bits)

    @property
    def num_bits(self) -> int:
        return len(self.flips)

    def factor(self, bit: int) -> np.ndarray:
        e01, e10 = self.flips[bit]
        return np.array([[1.0 - e01, e10], [e01, 1.0 - e10]])

    def assignment(self) -> "AssignmentMatrix":
        return AssignmentMatrix.from_factors([self.factor(b) for b in range(self.num_bits)])

    def flip_outcome(self, value: int, uniforms: np.ndarray) -> int:
        """Flip each bit of ``value`` with its own probability; uniforms[b] drives bit b."""
        out = value
        for b in range(self.num_bits):
            e01, e10 = self.flips[b]
            p = e10 if (value >> b) & 1 else e01
            if uniforms[b] < p:
                out ^= 1 << b
        return out


class AssignmentMatrix:
    """Column-stochastic map from ideal to noisy outcome distributions."""

    def __init__(self, matrix: np.ndarray | None = None,
                 factors: list[np.ndarray] | None = None):
        if (matrix is None) == (factors is None):
            raise MitigationError("provide exactly one of matrix or factors")
        if factors is not None:
            self.factors = [np.asarray(f, dtype=float) for f in factors]
            for f in self.factors:
                self._check_stochastic(f)
            self.num_bits = len(self.factors)
            self._matrix = None
        else:
            mat = np.asarray(matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise MitigationError("assignment matrix must be square")
            bits = int(math.log2(mat.shape[0]))
            if 2**bits != mat.shape[0]:
                raise MitigationError("assignment matrix dimension must be a power of two")
            if bits > 6:
                raise MitigationError("dense assignment matrices limited to 6 bits; use factors")
            self._check_stochastic(mat)
            self.factors = None
            self.num_bits = bits
            self._matrix = mat

    @staticmethod
    def _check_stochastic(mat: np.ndarray) -> None:
        if np.any(mat < -1e-12):
            raise MitigationError("assignment matrix entries must be nonnegative")
        sums = mat.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > 1e-10:
            raise MitigationError(f"assignment matrix columns must sum to 1, got {sums}")

    @classmethod
    def identity(cls, num_bits: int) -> "AssignmentMatrix":
        return cls(factors=[np.eye(2)] * num_bits)

    @classmethod
    def from_factors(cls, factors) -> "AssignmentMatrix":
        return cls(factors=list(factors))

    @property
    def dim(self) -> int:
        return 2**self.num_bits

    def matrix(self) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        mat = np.array([[1.0]])
        for f in self.factors:  # bit 0 is least significant
            mat = np.kron(f, mat)
        return mat

    def condition_number(self) -> float:
        if self.factors is not None:
            return float(np.prod([np.linalg.cond(f) for f in self.factors]))
        return float(np.linalg.cond(self._matrix))

    def _contract(self, dist: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
        tensor = dist.reshape((2,) * self.num_bits)
        for bit, mat in enumerate(mats):
            axis = self.num_bits - 1 - bit
            tensor = np.moveaxis(np.tensordot(mat, tensor, axes=([1], [axis])), 0, axis)
        return tensor.reshape(-1)

    def apply(self, dist: np.ndarray) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        if dist.shape != (self.dim,):
            raise MitigationError(f"distribution length {dist.shape} does not match {self.dim}")
        if self.factors is not None:
            return self._contract(dist, self.factors)
        return self._matrix @ dist

    def apply_inverse(self, dist: np.ndarray) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        if dist.shape != (self.dim,):
            raise MitigationError(f"distribution length {dist.shape} does not match {self.dim}")
        if self.condition_number() >= CONDITION_LIMIT:
            raise IllConditionedError(
                f"assignment matrix condition number {self.condition_number():.3g} "
                f"exceeds {CONDITION_LIMIT:g}")
        if self.factors is not None:
            inverses = [np.linalg.inv(f) for f in self.factors]
            return self._contract(dist, inverses)
        return np.linalg.solve(self._matrix, dist)

    def to_json(self) -> dict:
        if self.factors is not None:
            return {"num_bits": self.num_bits,
                    "factors": [f.tolist() for f in self.factors]}
        return {"num_bits": self.num_bits, "matrix": self._matrix.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "AssignmentMatrix":
        if "factors" in doc:
            return cls(factors=[np.array(f) for f in doc["factors"]])
        return cls(matrix=np.array(doc["matrix"]))


def apply_noise(dist: np.ndarray, assignment: AssignmentMatrix) -> np.ndarray:
    """Noisy distribution A @ P; validates both are normalized."""
    dist = np.asarray(dist, dtype=float)
    if abs(dist.sum() - 1.0) > 1e-10:
        raise MitigationError(f"input distribution sums to {dist.sum()}, expected 1")
    out = assignment.apply(dist)
    if abs(out.sum() - 1.0) > 1e-10:
        raise MitigationError("noisy distribution lost normalization")
    return out


@dataclass(frozen=True)
class MitigatedDistribution:
    """Raw inverse-applied vector plus an opt-in display-only clipped variant.

    The raw vector may carry small negatives; signed recombination consumes it
    as-is (clipping would bias the sums).
    """

    raw: np.ndarray
    negative_mass: float

    @property
    def clipped(self) -> np.ndarray:
        c = np.clip(self.raw, 0.0, None)
        total = c.sum()
        if total <= 0:
            raise MitigationError("clipped distribution has no positive mass")
        return c / total


def mitigate(noisy: np.ndarray, assignment: AssignmentMatrix) -> MitigatedDistribution:
    raw = assignment.apply_inverse(np.asarray(noisy, dtype=float))
    return MitigatedDistribution(raw, float(-np.sum(np.minimum(raw, 0.0))))


def calibrate(runner, num_bits: int, shots: int) -> AssignmentMatrix:
    """Estimate A column by column: prepare each basis state, count outcomes.

    ``runner(state_index, shots)`` returns an outcome-count vector of length
    2**num_bits and must be deterministic given its own seed. Columns sum to
    one exactly by construction.
    """
    if shots < 1:
        raise MitigationError("calibration needs at least one shot")
    dim = 2**num_bits
    mat = np.zeros((dim, dim))
    for col in range(dim):
        counts = np.asarray(runner(col, shots), dtype=float)
        if counts.shape != (dim,) or counts.sum() <= 0:
            raise MitigationError(f"runner returned invalid counts for state {col}")
        mat[:, col] = counts / counts.sum()
    return AssignmentMatrix(matrix=mat) if num_bits <= 6 else _factorized_from_dense(mat, num_bits)


def _factorized_from_dense(mat: np.ndarray, num_bits: int) -> AssignmentMatrix:
    raise MitigationError("dense calibration limited to 6 bits")


def make_noisy_runner(model: ReadoutNoiseModel, seed: int):
    """Simulated calibration channel: prepares |s'>, reads out through the noise model."""
    def runner(state_index: int, shots: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(key=[seed, state_index]))
        counts = np.zeros(2**model.num_bits)
        uniforms = rng.random((shots, model.num_bits))
        for row in range(shots):
            counts[model.flip_outcome(state_index, uniforms[row])] += 1
        return counts
    return runner


# ---------------------------------------------------------------------------
# per-configuration tables for the cut protocol
# ---------------------------------------------------------------------------

@dataclass
class ConfigTable:
    """Outcome distributions per (measurement axes, prepared labels) configuration.

    Outcome index layout: payload bits [0, num_payload) in the observable
    basis, then cut g's measured bit at position num_payload + g.
    """

    role: str
    num_payload: int
    num_cuts: int
    configs: dict  # (axes tuple, prep label tuple) -> np.ndarray over outcomes

    @property
    def num_bits(self) -> int:
        return self.num_payload + self.num_cuts

    def normalized(self) -> "ConfigTable":
        out = {}
        for key, vec in self.configs.items():
            total = vec.sum()
            out[key] = vec / total if total > 0 else vec.copy()
        return ConfigTable(self.role, self.num_payload, self.num_cuts, out)

    def transformed(self, fn) -> "ConfigTable":
        return ConfigTable(self.role, self.num_payload, self.num_cuts,
                           {key: fn(vec) for key, vec in self.configs.items()})


def _all_configs(num_cuts: int):
    for axes in itertools.product(_AXES, repeat=num_cuts):
        for prep in itertools.product(LABELS, repeat=num_cuts):
            yield axes, prep


def exact_config_table(program: LocalProgram, observable: PauliObservable | None) -> ConfigTable:
    """Exact per-configuration outcome probabilities (no sampling)."""
    configs = {}
    for axes, prep in _all_configs(program.num_cuts):
        configs[(axes, prep)] = config_distribution(program, axes, prep, observable)
    return ConfigTable(program.role, program.num_payload, program.num_cuts, configs)


@dataclass(frozen=True)
class ConditionalTables:
    """The displayed normalized conditionals plus the weight-carrying joints.

    ``conditionals`` maps (measured labels, prepared labels) to the normalized
    payload distribution P(s | labels); entries whose s-marginal vanished are
    reported in ``zero_denominators`` and excluded. ``joints`` holds the
    per-configuration distributions q(s, bits | axes, preps) that the signed
    recombination consumes.
    """

    role: str
    conditionals: dict
    weights: dict       # (measured labels, prepared labels) -> P(measured bits | config)
    joints: ConfigTable
    zero_denominators: tuple

    @classmethod
    def from_table(cls, table: ConfigTable) -> "ConditionalTables":
        conditionals, weights, zeros = {}, {}, []
        p, cuts = table.num_payload, table.num_cuts
        for (axes, prep), vec in table.normalized().configs.items():
            for bits in itertools.product((0, 1), repeat=cuts):
                base = sum(b << (p + g) for g, b in enumerate(bits))
                block = vec[base:base + 2**p]
                meas = tuple((b, a) for b, a in zip(bits, axes))
                weight = float(block.sum())
                weights[(meas, prep)] = weight
                if weight <= 0.0:
                    zeros.append((meas, prep))
                else:
                    conditionals[(meas, prep)] = block / weight
        return cls(table.role, conditionals, weights, table.normalized(), tuple(zeros))


def mitigated_conditionals(counts_a: ConfigTable, counts_b: ConfigTable,
                           assignment_a: AssignmentMatrix,
                           assignment_b: AssignmentMatrix) -> tuple[ConditionalTables, ConditionalTables]:
    """Apply per-configuration inverses, then form conditionals and joints."""
    for table, assignment in ((counts_a, assignment_a), (counts_b, assignment_b)):
        if assignment.num_bits != table.num_bits:
            raise MitigationError(
                f"assignment spans {assignment.num_bits} bits but {table.role} "
                f"outcomes have {table.num_bits}")
    fixed_a = counts_a.normalized().transformed(assignment_a.apply_inverse)
    fixed_b = counts_b.normalized().transformed(assignment_b.apply_inverse)
    return ConditionalTables.from_table(fixed_a), ConditionalTables.from_table(fixed_b)


def recombine_joint(table_a: ConfigTable, table_b: ConfigTable, num_cuts: int) -> np.ndarray:
    """P(s_A, s_B) from per-configuration joints via the signed pairing sum."""
    pa, pb = table_a.num_payload, table_b.num_payload
    joint = np.zeros((2**pa, 2**pb))
    norm_a = table_a.normalized().configs
    norm_b = table_b.normalized().configs
    for alice_meas in itertools.product(LABELS, repeat=num_cuts):
        a_axes = tuple(a for _, a in alice_meas)
        a_bits = tuple(i for i, _ in alice_meas)
        bob_prep = tuple((paired_bit(a, i), a) for i, a in alice_meas)
        sign_a = int(np.prod([axis_sign(a) for a in a_axes])) if num_cuts else 1
        for bob_meas in itertools.product(LABELS, repeat=num_cuts):
            b_axes = tuple(a for _, a in bob_meas)
            b_bits = tuple(k for k, _ in bob_meas)
            alice_prep = tuple((paired_bit(a, k), a) for k, a in bob_meas)
            sign = sign_a * (int(np.prod([axis_sign(a) for a in b_axes])) if num_cuts else 1)
            vec_a = norm_a[(a_axes, alice_prep)]
            vec_b = norm_b[(b_axes, bob_prep)]
            base_a = sum(b << (pa + g) for g, b in enumerate(a_bits))
            base_b = sum(b << (pb + g) for g, b in enumerate(b_bits))
            block_a = vec_a[base_a:base_a + 2**pa]
            block_b = vec_b[base_b:base_b + 2**pb]
            joint += sign * np.outer(block_a, block_b)
    return joint


def expectation_from_joint(joint: np.ndarray, obs_a: PauliObservable,
                           obs_b: PauliObservable) -> float:
    eig_a = np.array([obs_a.eigenvalue(s) for s in range(joint.shape[0])])
    eig_b = np.array([obs_b.eigenvalue(s) for s in range(joint.shape[1])])
    return float(eig_a @ joint @ eig_b)


# ---------------------------------------------------------------------------
# end-to-end pipelines (exact-probability and sampled modes)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MitigationRunResult:
    ideal: float
    noisy: float
    mitigated: float
    stderr: float | None  # sampled mode only (block spread)


def _pipeline_tables(circuit: PartitionedCircuit, observable, plan: CutPlan | None):
    plan = plan or CutPlan()
    if plan.side != "alice":
        raise MitigationError("mitigation pipeline runs on alice-side cut plans")
    obs = PauliObservable.from_spec(observable, circuit.total_qubits)
    prog_a, prog_b = split_local(circuit, plan)
    obs_a, obs_b = obs.split(circuit.alice_qubits)
    return prog_a, prog_b, obs_a, obs_b


def exact_mitigation_run(circuit: PartitionedCircuit, observable, eps: float,
                         plan: CutPlan | None = None) -> MitigationRunResult:
    """Exact-probability mode: propagate distributions, no sampling anywhere."""
    prog_a, prog_b, obs_a, obs_b = _pipeline_tables(circuit, observable, plan)
    table_a = exact_config_table(prog_a, obs_a)
    table_b = exact_config_table(prog_b, obs_b)
    num_cuts = circuit.num_nonlocal

    ideal = expectation_from_joint(recombine_joint(table_a, table_b, num_cuts), obs_a, obs_b)

    model_a = ReadoutNoiseModel.symmetric(eps, table_a.num_bits)
    model_b = ReadoutNoiseModel.symmetric(eps, table_b.num_bits)
    asg_a, asg_b = model_a.assignment(), model_b.assignment()
    noisy_a = table_a.transformed(asg_a.apply)
    noisy_b = table_b.transformed(asg_b.apply)
    noisy = expectation_from_joint(recombine_joint(noisy_a, noisy_b, num_cuts), obs_a, obs_b)

    cond_a, cond_b = mitigated_conditionals(noisy_a, noisy_b, asg_a, asg_b)
    mitigated = expectation_from_joint(
        recombine_joint(cond_a.joints, cond_b.joints, num_cuts), obs_a, obs_b)
    return MitigationRunResult(ideal, noisy, mitigated, None)


def _pad4(n: int) -> int:
    return n + (-n) % 4


def _run_party_shot(sampler, num_cuts, num_payload, model, u, w):
    """One party's independently configured run: returns (config key, noisy outcome).

    Draw layout: per cut g, u[3g] picks the axis, u[3g+1] the preparation
    label, u[3g+2] the Born outcome; u[3L] samples the payload. Cut events
    fire in the program's own op order, so any substitution scheme works.
    """
    walker = sampler.walker()
    axes = [_AXES[min(int(u[3 * g] * 3), 2)] for g in range(num_cuts)]
    preps = [LABELS[min(int(u[3 * g + 1] * 6), 5)] for g in range(num_cuts)]
    bits = [0] * num_cuts
    for op in sampler.program.ops:
        if op.kind == "measure_cut":
            bits[op.cut] = walker.measure(op.cut, axes[op.cut], u[3 * op.cut + 2])
        elif op.kind == "prepare_cut":
            walker.prepare(op.cut, preps[op.cut][0], preps[op.cut][1])
    payload, _ = walker.sample_payload(u[3 * num_cuts])
    outcome = payload + sum(b << (num_payload + g) for g, b in enumerate(bits))
    noisy = model.flip_outcome(outcome, w)
    return (tuple(axes), tuple(preps)), noisy


def sampled_counts(circuit: PartitionedCircuit, observable, shots: int, seed: int,
                   eps: float, plan: CutPlan | None = None,
                   shot_range: tuple[int, int] | None = None) -> tuple[ConfigTable, ConfigTable]:
    """Collect noisy per-configuration outcome counts from randomized local runs.

    Every shot draws each party's configuration uniformly and independently
    (measurement axes over {x, y, z}, preparations over the six eigenstate
    labels) and Born-samples the outcomes through the local program; every
    measured bit is then flipped per the readout model. The transition-matrix
    pairing is imposed afterward by the recombination, so no conditioning
    variable is causally downstream of the outcomes it conditions and the
    per-configuration distributions are estimated without bias.
    """
    prog_a, prog_b, obs_a, obs_b = _pipeline_tables(circuit, observable, plan)
    num_cuts = circuit.num_nonlocal
    pa, pb = prog_a.num_payload, prog_b.num_payload
    model_a = ReadoutNoiseModel.symmetric(eps, pa + num_cuts)
    model_b = ReadoutNoiseModel.symmetric(eps, pb + num_cuts)
    sampler_a = sampler_mod.ProgramSampler(prog_a, obs_a)
    sampler_b = sampler_mod.ProgramSampler(prog_b, obs_b)

    counts_a: dict = {}
    counts_b: dict = {}
    per_party = 3 * num_cuts + 1
    per_shot = _pad4(2 * per_party)
    noise_per_shot = _pad4(2 * num_cuts + pa + pb)
    start_shot, end_shot = shot_range or (0, shots)
    chunk = 1 << 14
    for start in range(start_shot, end_shot, chunk):
        count = min(chunk, end_shot - start)
        uniforms = sampler_mod.shot_uniforms(seed, start, count, per_shot)
        noise = sampler_mod.shot_uniforms([seed, 0x6E6F6973], start, count, noise_per_shot)
        for row in range(count):
            u = uniforms[row]
            w = noise[row]
            key_a, out_a = _run_party_shot(sampler_a, num_cuts, pa, model_a,
                                           u[:per_party], w[:pa + num_cuts])
            key_b, out_b = _run_party_shot(sampler_b, num_cuts, pb, model_b,
                                           u[per_party:2 * per_party],
                                           w[pa + num_cuts:pa + pb + 2 * num_cuts])
            counts_a.setdefault(key_a, np.zeros(2**(pa + num_cuts)))[out_a] += 1
            counts_b.setdefault(key_b, np.zeros(2**(pb + num_cuts)))[out_b] += 1
    for axes, prep in _all_configs(num_cuts):
        counts_a.setdefault((axes, prep), np.zeros(2**(pa + num_cuts)))
        counts_b.setdefault((axes, prep), np.zeros(2**(pb + num_cuts)))
    return (ConfigTable("alice", pa, num_cuts, counts_a),
            ConfigTable("bob", pb, num_cuts, counts_b))


def _add_tables(a: ConfigTable, b: ConfigTable) -> ConfigTable:
    merged = {key: a.configs[key] + b.configs[key] for key in a.configs}
    return ConfigTable(a.role, a.num_payload, a.num_cuts, merged)


def sampled_mitigation_run(circuit: PartitionedCircuit, observable, shots: int,
                           seed: int, eps: float, plan: CutPlan | None = None,
                           blocks: int = 20) -> MitigationRunResult:
    """Sampled mode: estimate, mitigate, and report a block-spread standard error."""
    if shots < blocks * 10:
        raise MitigationError("too few shots for block error estimation")
    prog_a, prog_b, obs_a, obs_b = _pipeline_tables(circuit, observable, plan)
    num_cuts = circuit.num_nonlocal
    model_a = ReadoutNoiseModel.symmetric(eps, prog_a.num_payload + num_cuts)
    model_b = ReadoutNoiseModel.symmetric(eps, prog_b.num_payload + num_cuts)
    asg_a, asg_b = model_a.assignment(), model_b.assignment()

    table_a = exact_config_table(prog_a, obs_a)
    table_b = exact_config_table(prog_b, obs_b)
    ideal = expectation_from_joint(recombine_joint(table_a, table_b, num_cuts), obs_a, obs_b)

    block_edges = np.linspace(0, shots, blocks + 1, dtype=int)
    mitigated_vals = []
    total_a = total_b = None
    for b in range(blocks):
        counts_a, counts_b = sampled_counts(circuit, observable, shots, seed, eps, plan,
                                            shot_range=(int(block_edges[b]), int(block_edges[b + 1])))
        cond_a, cond_b = mitigated_conditionals(counts_a, counts_b, asg_a, asg_b)
        mitigated_vals.append(expectation_from_joint(
            recombine_joint(cond_a.joints, cond_b.joints, num_cuts), obs_a, obs_b))
        total_a = counts_a if total_a is None else _add_tables(total_a, counts_a)
        total_b = counts_b if total_b is None else _add_tables(total_b, counts_b)
    # point estimates come from the pooled table (ratio bias ~ 1/counts-per-config);
    # the block spread only calibrates the error bar
    noisy = expectation_from_joint(recombine_joint(total_a, total_b, num_cuts), obs_a, obs_b)
    cond_a, cond_b = mitigated_conditionals(total_a, total_b, asg_a, asg_b)
    mitigated = expectation_from_joint(
        recombine_joint(cond_a.joints, cond_b.joints, num_cuts), obs_a, obs_b)
    stderr = float(np.std(np.array(mitigated_vals), ddof=1) / math.sqrt(blocks))
    return MitigationRunResult(ideal, float(noisy), float(mitigated), stderr)
