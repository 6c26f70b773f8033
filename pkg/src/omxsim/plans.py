"""Executable simulation plans: declarations, registries, element wiring.

A CircuitPlan is the common executable form behind both the built-in
protocol runners and circuits compiled from `.omx` text.  Registry order is
the declaration order (photon paths contribute an H then a V mode), so a
plan determines the basis layout completely and runs are deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import constants, elements
from .elements import ScatterModel
from .fock import (
    ElementOp,
    ModeLabel,
    ModeRegistry,
    OmxError,
    magnon,
    optical,
)


class PlanError(OmxError):
    """Structurally invalid simulation plan."""


PHOTON_INITS = ("vacuum", "single_h", "single_v", "qubit")
MAGNON_INITS = ("ground", "thermal")


@dataclass(frozen=True)
class PhotonDecl:
    path: str
    init: str = "vacuum"

    def __post_init__(self):
        if self.init not in PHOTON_INITS:
            raise PlanError(f"unknown photon init {self.init!r}")


@dataclass(frozen=True)
class MagnonDecl:
    path: str
    init: str = "ground"

    def __post_init__(self):
        if self.init not in MAGNON_INITS:
            raise PlanError(f"unknown magnon init {self.init!r}")


@dataclass(frozen=True)
class ModeRef:
    """Symbolic reference to a declared mode (photon needs a polarization)."""

    kind: str           # "photon" | "magnon"
    path: str
    pol: str | None = None


@dataclass(frozen=True)
class ElementStep:
    name: str
    args: tuple


@dataclass(frozen=True)
class BellMeasure:
    path1: str
    path2: str


@dataclass(frozen=True)
class PlanSettings:
    protocol: str = "teleport"          # teleport | swap
    n_bar: float = 0.0
    thermal_cutoff: int = constants.DEFAULT_THERMAL_CUTOFF
    renormalize: bool = True
    model: ScatterModel = ScatterModel.PAPER_UNIFORM
    alpha: complex = 1.0 + 0.0j
    beta: complex = 0.0 + 0.0j
    photon_cutoff: int = constants.DEFAULT_OPTICAL_CUTOFF
    # extension flags: per-magnon thermal occupations (sphere frequencies not
    # identical), and counting the odd-parity heralds in the aggregate despite
    # their number-resolution requirement
    n_bar_overrides: tuple = ()
    include_odd_parity: bool = False

    def __post_init__(self):
        if self.protocol not in ("teleport", "swap"):
            raise PlanError(f"unknown protocol {self.protocol!r}")
        if self.n_bar < 0:
            raise PlanError("thermal occupation must be >= 0")
        if self.thermal_cutoff < 1:
            raise PlanError("thermal cutoff must be >= 1")
        if self.photon_cutoff < 1:
            raise PlanError("photon cutoff must be >= 1")
        for path, value in self.n_bar_overrides:
            if value < 0:
                raise PlanError(f"override for {path!r} must be >= 0")

    def n_bar_for(self, path: str, shared: float | None = None) -> float:
        for p, value in self.n_bar_overrides:
            if p == path:
                return value
        return self.n_bar if shared is None else shared


@dataclass(frozen=True)
class CircuitPlan:
    decls: tuple
    steps: tuple[ElementStep, ...]
    measure: BellMeasure
    settings: PlanSettings

    def photon_decls(self) -> list[PhotonDecl]:
        return [d for d in self.decls if isinstance(d, PhotonDecl)]

    def magnon_decls(self) -> list[MagnonDecl]:
        return [d for d in self.decls if isinstance(d, MagnonDecl)]


def thermal_weights(n_bar: float, cutoff: int, renormalize: bool) -> np.ndarray:
    """Geometric weights (1-s) s^n, n <= cutoff, of a truncated thermal state."""
    s = n_bar / (n_bar + 1.0)
    weights = (1.0 - s) * s ** np.arange(cutoff + 1)
    if renormalize:
        weights = weights / weights.sum()
    return weights


def build_registry(plan: CircuitPlan) -> ModeRegistry:
    """Registry in declaration order; magnon cutoffs keep scattering headroom."""
    modes: list[ModeLabel] = []
    cutoffs: list[int] = []
    s = plan.settings
    for decl in plan.decls:
        if isinstance(decl, PhotonDecl):
            modes += [optical(decl.path, "H"), optical(decl.path, "V")]
            cutoffs += [s.photon_cutoff, s.photon_cutoff]
        else:
            modes.append(magnon(decl.path))
            cutoffs.append(s.thermal_cutoff + 1)
    return ModeRegistry(modes, cutoffs)


def _resolve(registry: ModeRegistry, ref: ModeRef) -> int:
    if ref.kind == "photon":
        return registry.optical_index(ref.path, ref.pol)
    return registry.magnon_index(ref.path)


def build_elements(plan: CircuitPlan, registry: ModeRegistry) -> list[ElementOp]:
    """Instantiate every step against the registry, in order."""
    s = plan.settings
    ops = []
    for step in plan.steps:
        a = step.args
        if step.name == "bs50":
            ops.append(elements.beam_splitter_50_50(
                registry, _resolve(registry, a[0]), _resolve(registry, a[1])))
        elif step.name == "hwp":
            ops.append(elements.half_wave_plate(registry, a[0], float(a[1])))
        elif step.name == "qwp":
            ops.append(elements.quarter_wave_plate(registry, a[0], float(a[1])))
        elif step.name == "pbs":
            ops.append(elements.pbs(registry, a[0], a[1]))
        elif step.name == "phase":
            ops.append(elements.phase_shift(registry, _resolve(registry, a[0]),
                                            float(a[1])))
        elif step.name == "stokes":
            ops.append(elements.stokes_scatter(
                registry, _resolve(registry, a[0]), _resolve(registry, a[1]),
                _resolve(registry, a[2]), model=s.model))
        elif step.name == "antistokes":
            ops.append(elements.antistokes_swap(
                registry, _resolve(registry, a[0]), _resolve(registry, a[1])))
        elif step.name == "pdc":
            ops.append(elements.pdc_evolution(
                registry, _resolve(registry, a[0]), _resolve(registry, a[1]),
                float(a[2])))
        else:
            raise PlanError(f"unknown element {step.name!r}")
    return ops


def iter_components(plan: CircuitPlan) -> Iterator[tuple[int, ...]]:
    """All joint thermal occupations (ground magnons pinned to 0).

    Yields one occupation per magnon declaration, in declaration order; the
    component set depends only on the thermal cutoff, not on n_bar.
    """
    ranges = []
    for decl in plan.magnon_decls():
        if decl.init == "thermal":
            ranges.append(range(plan.settings.thermal_cutoff + 1))
        else:
            ranges.append(range(1))
    yield from itertools.product(*ranges)


def component_weight(plan: CircuitPlan, occupations: Sequence[int],
                     shared_n_bar: float) -> float:
    """Probability weight of one thermal component (per-mode overrides apply)."""
    s = plan.settings
    w = 1.0
    for decl, n in zip(plan.magnon_decls(), occupations):
        if decl.init == "thermal":
            weights = thermal_weights(s.n_bar_for(decl.path, shared_n_bar),
                                      s.thermal_cutoff, s.renormalize)
            w *= weights[n]
        # ground modes contribute weight 1 at n = 0
    return float(w)


def initial_vector(plan: CircuitPlan, registry: ModeRegistry,
                   occupations: Sequence[int]) -> np.ndarray:
    """Initial amplitude vector for one thermal component (raw ndarray)."""
    s = plan.settings
    local_vectors = []
    mag_iter = iter(occupations)
    for decl in plan.decls:
        if isinstance(decl, PhotonDecl):
            d = s.photon_cutoff + 1
            vec = np.zeros(d * d, dtype=complex)   # little-endian (H, V)
            if decl.init == "vacuum":
                vec[0] = 1.0
            elif decl.init == "single_h":
                vec[1] = 1.0
            elif decl.init == "single_v":
                vec[d] = 1.0
            else:  # qubit: alpha |H> + beta |V>
                vec[1] = s.alpha
                vec[d] = s.beta
            local_vectors.append(vec)
        else:
            d = s.thermal_cutoff + 2
            vec = np.zeros(d, dtype=complex)
            vec[next(mag_iter)] = 1.0
            local_vectors.append(vec)
    full = np.ones(1, dtype=complex)
    for vec in local_vectors:       # little-endian kron: later decls slower
        full = np.kron(vec, full)
    if full.shape[0] != registry.dimension:
        raise PlanError("initial vector does not match registry dimension")
    return full
