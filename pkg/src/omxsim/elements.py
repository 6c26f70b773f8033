"""Optical and optomagnonic element constructors with fixed phase conventions.

Conventions (all of them; only coincidence statistics are physically fixed):

* 50/50 beam splitter: real Hadamard convention, a1+ -> (a1+ + a2+)/sqrt(2),
  a2+ -> (a1+ - a2+)/sqrt(2).  A single photon in the first (drive) input
  becomes (|01> + |10>)/sqrt(2).
* PBS: horizontal transmits (stays on its input line's continuation),
  vertical reflects (crosses to the other line).  Output ports reuse the
  input path labels.
* Half-wave plate at angle theta: [[cos 2t, sin 2t], [sin 2t, -cos 2t]] on
  (H, V); theta = pi/8 is the Hadamard, theta = pi/4 swaps H and V.
* Quarter-wave plate: symmetric retarder R(t) diag(e^{i pi/4}, e^{-i pi/4})
  R(-t); the fast axis leads by +i relative to the slow axis.
* State swap (anti-Stokes interaction at gt = pi/2): |01> -> -i |10>;
  `exact_swap=True` appends a local phase that restores the literal SWAP.

Multi-photon behaviour of every passive element is obtained by exponentiating
the quadratic generator of its single-particle matrix on the truncated joint
space, which keeps the lifted operator exactly unitary.
"""

from __future__ import annotations

import enum

import numpy as np
import scipy.linalg
import scipy.optimize

from . import constants
from .fock import (
    ElementOp,
    ModeKind,
    ModeRegistry,
    OperatorError,
    OpFlavor,
    Polarization,
    destroy,
    embed_local,
)


class ScatterModel(enum.Enum):
    """Weighting of the post-selected single-scattering event.

    PAPER_UNIFORM adds the excitation with occupation-independent amplitude,
    so a thermal mixture keeps its geometric weights.  BOSONIC applies the
    physical sqrt(n+1) creation weighting; outcome weights then acquire an
    (n+1) enhancement and the state requires renormalization after
    post-selection.
    """

    PAPER_UNIFORM = "paper"
    BOSONIC = "bosonic"


# ---------------------------------------------------------------------------
# passive (number-conserving) elements from single-particle matrices

def _hermitian_phase(u: np.ndarray) -> np.ndarray:
    """Hermitian h with u = expm(i h), via a complex Schur form."""
    res = np.abs(u @ u.conj().T - np.eye(u.shape[0])).max()
    if res > constants.UNITARITY_TOL:
        raise OperatorError(f"single-particle matrix not unitary (residual {res:.3e})")
    t, q = scipy.linalg.schur(u, output="complex")
    phases = np.angle(np.diag(t))
    return (q * phases) @ q.conj().T


def passive_lift(registry: ModeRegistry, targets: tuple[int, ...],
                 u: np.ndarray, label: str) -> ElementOp:
    """Lift a k x k single-particle unitary to the targets' joint Fock space."""
    dims = [registry.dims[t] for t in targets]
    h = _hermitian_phase(np.asarray(u, dtype=complex))
    ann = [embed_local({i: destroy(dims[i])}, dims) for i in range(len(dims))]
    quad = np.zeros((int(np.prod(dims)),) * 2, dtype=complex)
    for i in range(len(dims)):
        for j in range(len(dims)):
            if h[i, j] != 0:
                quad += h[i, j] * (ann[i].conj().T @ ann[j])
    matrix = scipy.linalg.expm(1j * quad)
    return ElementOp(targets, matrix, OpFlavor.UNITARY, label=label)


def beam_splitter_50_50(registry: ModeRegistry, mode1: int, mode2: int) -> ElementOp:
    """Symmetric 50/50 beam splitter on two equal-cutoff modes."""
    if mode1 == mode2:
        raise OperatorError("beam splitter needs two distinct modes")
    if registry.dims[mode1] != registry.dims[mode2]:
        raise OperatorError("beam splitter requires equal cutoffs")
    u = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    return passive_lift(registry, (mode1, mode2), u, "bs50")


def hwp_jones(theta: float) -> np.ndarray:
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp_jones(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]], dtype=complex)
    retard = np.diag([np.exp(1j * np.pi / 4), np.exp(-1j * np.pi / 4)])
    return rot @ retard @ rot.conj().T


def _polarization_pair(registry: ModeRegistry, path: str) -> tuple[int, int]:
    try:
        h = registry.optical_index(path, Polarization.H)
        v = registry.optical_index(path, Polarization.V)
    except Exception as exc:
        raise OperatorError(f"path {path!r} needs both H and V modes") from exc
    return h, v


def half_wave_plate(registry: ModeRegistry, path: str, theta: float) -> ElementOp:
    """HWP with fast axis at `theta` acting on one optical path."""
    h, v = _polarization_pair(registry, path)
    return passive_lift(registry, (h, v), hwp_jones(theta), f"hwp({path})")


def quarter_wave_plate(registry: ModeRegistry, path: str, theta: float) -> ElementOp:
    """QWP with fast axis at `theta` acting on one optical path."""
    h, v = _polarization_pair(registry, path)
    return passive_lift(registry, (h, v), qwp_jones(theta), f"qwp({path})")


def pbs(registry: ModeRegistry, path1: str, path2: str) -> ElementOp:
    """Polarizing beam splitter: H transmits, V reflects (crosses paths).

    Output port 1 is the continuation of `path1`, port 2 of `path2`; the H
    modes stay put and the two V modes are exchanged.
    """
    if path1 == path2:
        raise OperatorError("pbs needs two distinct paths")
    _polarization_pair(registry, path1)
    _polarization_pair(registry, path2)
    v1 = registry.optical_index(path1, Polarization.V)
    v2 = registry.optical_index(path2, Polarization.V)
    if registry.dims[v1] != registry.dims[v2]:
        raise OperatorError("pbs requires equal cutoffs on the crossing modes")
    d = registry.dims[v1]
    swap = np.zeros((d * d, d * d), dtype=complex)
    for n1 in range(d):
        for n2 in range(d):
            swap[n2 + d * n1, n1 + d * n2] = 1.0
    return ElementOp((v1, v2), swap, OpFlavor.UNITARY, label=f"pbs({path1},{path2})")


def phase_shift(registry: ModeRegistry, mode: int, phi: float) -> ElementOp:
    """|n> -> e^{i n phi} |n> on the target mode."""
    d = registry.dims[mode]
    matrix = np.diag(np.exp(1j * phi * np.arange(d)))
    return ElementOp((mode,), matrix, OpFlavor.UNITARY, label="phase")


# ---------------------------------------------------------------------------
# optomagnonic scattering elements

def stokes_scatter(registry: ModeRegistry, te: int, tm: int, mag: int,
                   model: ScatterModel = ScatterModel.PAPER_UNIFORM) -> ElementOp:
    """Post-selected single Stokes scattering event.

    One drive (TE) photon is consumed; one scattered (TM) photon and one
    magnon excitation are created: |1,0,n> -> |0,1,n+1>.  The |0>_TE
    component (photon in the other arm, or an unsuccessful trial) is left
    untouched.  Domain: the TM mode vacuum, at most one TE photon, and the
    magnon below its cutoff whenever a photon is present; applying the
    element to a state with magnon occupation at the cutoff raises.
    """
    kinds = (registry.modes[te].kind, registry.modes[tm].kind, registry.modes[mag].kind)
    if kinds != (ModeKind.OPTICAL_PATH, ModeKind.OPTICAL_PATH, ModeKind.MAGNON):
        raise OperatorError("stokes_scatter expects (optical TE, optical TM, magnon)")
    dt, ds, dm = registry.dims[te], registry.dims[tm], registry.dims[mag]
    if ds < 2:
        raise OperatorError("TM output mode needs cutoff >= 1")

    def local_index(t, s, n):
        return t + dt * (s + ds * n)

    domain = []
    columns = []
    dim_out = dt * ds * dm
    for n in range(dm):
        domain.append(local_index(0, 0, n))
        col = np.zeros(dim_out, dtype=complex)
        col[local_index(0, 0, n)] = 1.0
        columns.append(col)
    for n in range(dm - 1):
        domain.append(local_index(1, 0, n))
        col = np.zeros(dim_out, dtype=complex)
        amp = 1.0 if model is ScatterModel.PAPER_UNIFORM else np.sqrt(n + 1)
        col[local_index(0, 1, n + 1)] = amp
        columns.append(col)
    matrix = np.column_stack(columns)
    flavor = OpFlavor.ISOMETRY if model is ScatterModel.PAPER_UNIFORM else OpFlavor.KRAUS
    return ElementOp((te, tm, mag), matrix, flavor, domain=tuple(domain),
                     label=f"stokes({model.value})")


def antistokes_swap(registry: ModeRegistry, photon: int, mag: int,
                    exact_swap: bool = False) -> ElementOp:
    """Full state swap between a photon and a magnon mode.

    Implemented as the beam-splitter interaction a+m + a m+ evolved to
    gt = pi/2, giving |0,n> -> (-i)^n |n,0>.  With `exact_swap` a local
    i^n phase on the photon mode restores the literal SWAP on every fully
    represented excitation sector.
    """
    dp, dm = registry.dims[photon], registry.dims[mag]
    if dp != dm:
        raise OperatorError("antistokes_swap requires matching cutoffs")
    dims = [dp, dm]
    a = embed_local({0: destroy(dp)}, dims)
    m = embed_local({1: destroy(dm)}, dims)
    gen = a.conj().T @ m + a @ m.conj().T
    matrix = scipy.linalg.expm(-1j * (np.pi / 2) * gen)
    if exact_swap:
        correction = embed_local({0: np.diag(1j ** np.arange(dp))}, dims)
        matrix = correction @ matrix
    return ElementOp((photon, mag), matrix, OpFlavor.UNITARY, label="antistokes")


def pdc_evolution(registry: ModeRegistry, photon: int, mag: int, gt: float) -> ElementOp:
    """Exponential of the truncated two-mode-squeezing generator bm + b+m+.

    The generator is truncated to the cutoff space first, so the element is
    exactly unitary there; the residual against the untruncated squeezer is
    measured in tests, not hidden.
    """
    dims = [registry.dims[photon], registry.dims[mag]]
    b = embed_local({0: destroy(dims[0])}, dims)
    m = embed_local({1: destroy(dims[1])}, dims)
    down = b @ m
    gen = down + down.conj().T
    matrix = scipy.linalg.expm(-1j * gt * gen)
    return ElementOp((photon, mag), matrix, OpFlavor.UNITARY, label="pdc")


# ---------------------------------------------------------------------------
# input-qubit preparation

def solve_preparation_angles(alpha: complex, beta: complex) -> tuple[float, float]:
    """Wave-plate angles (theta_hwp, theta_qwp) preparing alpha|H> + beta|V>.

    The plates act in sequence, HWP first, on an H-polarized photon; the
    target is reached up to a global phase.  Solved numerically on the 2x2
    Jones matrices: a coarse angle grid seeds a Nelder-Mead refinement.
    """
    target = np.array([alpha, beta], dtype=complex)
    nrm = np.linalg.norm(target)
    if nrm < 1e-12:
        raise OperatorError("degenerate target polarization")
    target = target / nrm
    h_in = np.array([1.0, 0.0], dtype=complex)

    def infidelity(angles):
        th, tq = angles
        out = qwp_jones(tq) @ (hwp_jones(th) @ h_in)
        return 1.0 - abs(np.vdot(target, out)) ** 2

    grid = np.linspace(0.0, np.pi, 25)
    seeds = sorted(((infidelity((th, tq)), (th, tq)) for th in grid for tq in grid),
                   key=lambda item: item[0])
    best = None
    for _, seed in seeds[:4]:
        res = scipy.optimize.minimize(infidelity, seed, method="Nelder-Mead",
                                      options={"xatol": 1e-12, "fatol": 1e-15})
        if best is None or res.fun < best.fun:
            best = res
    if best.fun > 1e-9:
        raise OperatorError(f"preparation solver stalled (infidelity {best.fun:.3e})")
    return float(best.x[0]), float(best.x[1])
