"""Truncated-Fock-space simulator for optomagnonic teleportation and
entanglement swapping, with a small circuit language and CLI."""

from .fock import (
    DensityMatrix,
    ElementOp,
    ModeKind,
    ModeLabel,
    ModeRegistry,
    OmxError,
    OperatorError,
    OpFlavor,
    Polarization,
    RegistryError,
    StateError,
    StateVector,
    apply,
    embed_cutoffs,
    expm_apply,
    fidelity,
    magnon,
    optical,
    partial_trace,
    tensor,
)
from .elements import (
    ScatterModel,
    antistokes_swap,
    beam_splitter_50_50,
    half_wave_plate,
    pbs,
    pdc_evolution,
    phase_shift,
    quarter_wave_plate,
    solve_preparation_angles,
    stokes_scatter,
)
from .measurement import (
    BellId,
    BellOutcome,
    DetectionNetwork,
    DetectorLabel,
    bell_projectors,
    project_and_normalize,
    simulate_detection,
)
from .protocols import (
    InputQubit,
    ProtocolReport,
    ThermalConfig,
    closed_form_f1,
    closed_form_f2,
    concurrence_dual_rail,
    entanglement_swap,
    genuine_threshold,
    prepare_epr,
    prepare_thermal,
    readout,
    retrieved_qubit_fidelity,
    sweep_fidelity,
    teleport,
)

__version__ = "0.1.0"
