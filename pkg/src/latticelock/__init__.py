"""Synchronization of desynchronized surface-code patches before lattice surgery.

Timing and policy solvers, timed stabilizer circuit generators, an idling
noise model, a bit-packed Pauli-frame sampler, matching decoders and a
cycle-level model of the runtime synchronization engine.
"""

__version__ = "0.1.0"
