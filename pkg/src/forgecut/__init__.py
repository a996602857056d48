"""forgecut: run a nonlocal two-party circuit as two local simulations
joined only by classical data.

Modules:
    qsim         dense statevector / density-operator simulation
    observables  product-Pauli observables over the joint register
    circuit      partitioned-circuit IR, parsing, splitting, full oracle
    forging      signed product-state decompositions (Bell, Schmidt)
    teleport     forged state teleportation and gate teleportation
    wirecut      identity-channel cutting, branch states, recombination
    sampler      signed Monte Carlo estimation with overhead accounting
    mitigation   readout-noise calibration, inversion, mitigated pipeline
    distrib      coordinator/worker LOCC harness over loopback or TCP
    cli          command-line entry points
"""

from . import circuit, forging, mitigation, observables, qsim, sampler, teleport, wirecut

__version__ = "0.1.0"

__all__ = ["circuit", "forging", "mitigation", "observables", "qsim", "sampler",
           "teleport", "wirecut", "__version__"]
