"""Multidimensional nonlinear spectroscopy on trapped-ion chains.

Builds Lindblad generators for phonon Bose-Hubbard and long-range Ising
chains, applies impulsive interaction superoperators, extracts
phase-signature components either by direct pathway enumeration or by phase
cycling, and turns delay scans into two-dimensional spectra.
"""

__version__ = "0.1.0"

from .spaces import SpaceLayout
from .liouville import (
    DensityMatrix,
    Dissipator,
    Operator,
    SuperOperator,
    build_generator,
    embed_local,
    expectation,
    ground_state,
    propagator,
    steady_state,
    thermal_dissipators,
)
from .models import (
    BathSpec,
    ExcitonTable,
    IsingChainParams,
    PhononChainParams,
    build_ising_model,
    build_phonon_model,
    equilibrium_positions,
    exciton_table,
    ising_hamiltonian,
    phonon_hamiltonian,
    recoil_energy,
    single_exciton_block,
)
from .pulses import (
    Interaction,
    Observable,
    carrier_unitary,
    generic_interaction,
    lower_only,
    motional_observable,
    number_observable,
    raise_only,
    sigma_z_observable,
    spin_pi2,
    weak_displacement,
)
from .pathways import (
    InteractionTerm,
    Pathway,
    PhaseSignature,
    enumerate_pathways,
    evaluate_pathways,
    expand_interaction,
    phase_cycled_signal,
)

__all__ = [name for name in dir() if not name.startswith("_")]
