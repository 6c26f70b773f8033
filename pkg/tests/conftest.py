import numpy as np
import pytest
from scipy.stats import unitary_group

from omxsim.fock import DensityMatrix, ModeRegistry, StateVector


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_pure(registry: ModeRegistry, rng) -> StateVector:
    amps = rng.normal(size=registry.dimension) + 1j * rng.normal(size=registry.dimension)
    return StateVector(registry, amps / np.linalg.norm(amps))


def random_mixed(registry: ModeRegistry, rng, rank: int = 3) -> DensityMatrix:
    mat = np.zeros((registry.dimension, registry.dimension), dtype=complex)
    weights = rng.random(rank)
    weights /= weights.sum()
    for w in weights:
        psi = random_pure(registry, rng)
        mat += w * np.outer(psi.amplitudes, psi.amplitudes.conj())
    return DensityMatrix(registry, mat)


def random_unitary(dim: int, rng) -> np.ndarray:
    return unitary_group.rvs(dim, random_state=np.random.RandomState(int(rng.integers(1 << 31))))


def brute_partial_trace(matrix: np.ndarray, dims, keep) -> np.ndarray:
    """Loop-based partial trace, independent of the library implementation."""
    n = len(dims)
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]

    def occ(index):
        out = []
        for d in dims:
            index, r = divmod(index, d)
            out.append(r)
        return out

    kdims = [dims[i] for i in keep]
    dk = int(np.prod(kdims))

    def kept_index(occupation):
        idx, stride = 0, 1
        for pos in keep:
            idx += occupation[pos] * stride
            stride *= dims[pos]
        return idx

    out = np.zeros((dk, dk), dtype=complex)
    d = int(np.prod(dims))
    for i in range(d):
        oi = occ(i)
        for j in range(d):
            oj = occ(j)
            if all(oi[t] == oj[t] for t in traced):
                out[kept_index(oi), kept_index(oj)] += matrix[i, j]
    return out
