"""Bloch bands of the 1-D cosine lattice in recoil units.

Everything here is dimensionless: energies in units of the recoil energy
E_rec = hbar^2 pi^2 / (2 m d_L^2), quasimomentum k in units of pi/d_L so
that the first Brillouin zone is B = [-1, 1), times in hbar/E_rec.

The lattice potential (V/2) cos(2 pi x / d_L) couples plane waves
exp(i (k + 2n) pi x / d_L) that differ by one reciprocal-lattice vector
with strength v0/4, giving a real symmetric tridiagonal Hamiltonian with
diagonal (k + 2n)^2, n = -cutoff..cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_CUTOFF = 32
DEFAULT_GRID_SIZE = 512


class EigensolverError(RuntimeError):
    """Tridiagonal eigensolver failed to converge."""


@dataclass(frozen=True)
class LatticeParams:
    """Dimensionless lattice depth v0 = V/E_rec and force f0 = F d_L/E_rec."""

    v0: float
    f0: float

    def __post_init__(self):
        if not (math.isfinite(self.v0) and self.v0 >= 0):
            raise ValueError(f"lattice depth must be finite and >= 0, got v0={self.v0}")
        if not (math.isfinite(self.f0) and self.f0 > 0):
            raise ValueError(f"force must be finite and > 0, got f0={self.f0}")

    @property
    def bloch_period(self) -> float:
        """T_B = 2 pi / f0 in units of hbar/E_rec."""
        return 2.0 * math.pi / self.f0


@dataclass(frozen=True, eq=False)
class BlochHamiltonian:
    """Plane-wave Hamiltonian at fixed quasimomentum, stored as tridiagonal bands."""

    k: float
    cutoff: int
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    def dense(self) -> np.ndarray:
        h = np.diag(self.diagonal)
        idx = np.arange(2 * self.cutoff)
        h[idx, idx + 1] = self.off_diagonal
        h[idx + 1, idx] = self.off_diagonal
        return h


@dataclass(frozen=True, eq=False)
class BandTable:
    """Band energies E_alpha(k) on a uniform grid covering B = [-1, 1)."""

    k_grid: np.ndarray
    energies: np.ndarray  # shape (grid_size, n_bands), ascending per row

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    def to_csv(self) -> str:
        header = "k," + ",".join(f"E{b+1}" for b in range(self.n_bands))
        lines = [header]
        for k, row in zip(self.k_grid, self.energies):
            lines.append(",".join(f"{x:.17g}" for x in (k, *row)))
        return "\n".join(lines) + "\n"


def build_bloch_hamiltonian(params: LatticeParams, k: float,
                            cutoff: int = DEFAULT_CUTOFF) -> BlochHamiltonian:
    """Hamiltonian at quasimomentum k in the truncated plane-wave basis."""
    if not math.isfinite(k):
        raise ValueError(f"quasimomentum must be finite, got k={k}")
    if abs(k) > 1.0:
        raise ValueError(f"quasimomentum outside the Brillouin zone: k={k}")
    if cutoff < 4:
        raise ValueError(f"cutoff >= 4 required for a usable basis, got {cutoff}")
    n = np.arange(-cutoff, cutoff + 1)
    diagonal = (k + 2.0 * n) ** 2
    off_diagonal = np.full(2 * cutoff, params.v0 / 4.0)
    return BlochHamiltonian(k=k, cutoff=cutoff, diagonal=diagonal,
                            off_diagonal=off_diagonal)


def _lowest_eigenvalues(h: BlochHamiltonian, n_bands: int) -> np.ndarray:
    try:
        w = scipy.linalg.eigh_tridiagonal(
            h.diagonal, h.off_diagonal, select="i",
            select_range=(0, n_bands - 1))[0]
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise EigensolverError(f"eigensolver failed at k={h.k}: {exc}") from exc
    return np.sort(w)


def band_energies(params: LatticeParams, n_bands: int = 3,
                  grid_size: int = DEFAULT_GRID_SIZE,
                  cutoff: int = DEFAULT_CUTOFF) -> BandTable:
    """Lowest n_bands band energies on a uniform k grid over [-1, 1).

    Bands are indexed by sorted eigenvalue order at each k; the bands of
    the cosine lattice do not cross, so sorting is a valid labeling.
    """
    if n_bands < 1 or n_bands > cutoff:
        raise ValueError(f"need 1 <= n_bands <= cutoff, got n_bands={n_bands}, cutoff={cutoff}")
    if grid_size < 16:
        raise ValueError(f"grid_size >= 16 required, got {grid_size}")
    k_grid = -1.0 + 2.0 * np.arange(grid_size) / grid_size
    energies = np.empty((grid_size, n_bands))
    for i, k in enumerate(k_grid):
        h = build_bloch_hamiltonian(params, k, cutoff)
        energies[i] = _lowest_eigenvalues(h, n_bands)
    return BandTable(k_grid=k_grid, energies=energies)


def mean_band_gap(params: LatticeParams, grid_size: int = DEFAULT_GRID_SIZE,
                  cutoff: int = DEFAULT_CUTOFF) -> float:
    """Brillouin-zone average of E_2(k) - E_1(k).

    The grid covers [-1, 1) without the duplicate endpoint, so the
    periodic trapezoidal rule reduces to the plain mean of the samples.
    """
    table = band_energies(params, n_bands=2, grid_size=grid_size, cutoff=cutoff)
    return float(np.mean(table.energies[:, 1] - table.energies[:, 0]))


def bloch_phase(params: LatticeParams, mean_gap: float) -> float:
    """Interband phase accumulated over one Bloch cycle: -2 pi <dE> / f0.

    Returned unwrapped (not reduced mod 2 pi); consumers reduce when needed.
    """
    if not (math.isfinite(mean_gap) and mean_gap > 0):
        raise ValueError(f"mean_gap must be finite and > 0, got {mean_gap}")
    return -2.0 * math.pi * mean_gap / params.f0
