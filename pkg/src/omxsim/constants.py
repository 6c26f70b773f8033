"""Central numerical tolerance and limit table.

Every tolerance used by validation code and by the test suite lives here, so
the accuracy contract of the package can be audited in one place.
"""

# State vectors: |norm - 1| tolerance for states flagged as normalized.
NORM_TOL = 1e-12

# Density matrices: Hermiticity and unit-trace tolerance.
HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12

# Most negative eigenvalue a density matrix may carry and still count as
# positive semidefinite (floating-point dust from conjugations).
PSD_EIGENVALUE_TOL = -1e-10

# Operator flavor checks: ||U U^dag - I|| / ||V^dag V - I|| tolerance.
UNITARITY_TOL = 1e-10

# Hermiticity tolerance for evolution generators passed to expm_apply.
GENERATOR_HERMITICITY_TOL = 1e-10

# Projectors must satisfy P^2 = P to this tolerance.
PROJECTOR_IDEMPOTENCE_TOL = 1e-10

# Measurement outcomes with probability below this are reported as
# unreachable rather than as true zeros carrying floating-point dust.
UNREACHABLE_PROBABILITY = 1e-14

# Residual imaginary part allowed when a fidelity is cast to a real number.
FIDELITY_IMAG_TOL = 1e-12

# Hard ceiling on the dimension of any mode registry (product of per-mode
# Fock dimensions).  Dense complex vectors of this length stay cheap.
MAX_DIMENSION = 1 << 20

# Default per-mode Fock cutoffs: dual-rail optical modes hold at most one
# photon in protocol use; magnon modes keep headroom above the thermal
# truncation so a single added excitation is always representable.
DEFAULT_OPTICAL_CUTOFF = 1
DEFAULT_THERMAL_CUTOFF = 2

# Root finding (genuine-teleportation threshold) bisection tolerance.
BISECTION_TOL = 1e-10
