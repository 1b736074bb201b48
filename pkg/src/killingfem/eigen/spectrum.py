"""Eigenpair containers and zero-eigenspace detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Spectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # (n, k), M-orthonormal columns
    residuals: np.ndarray  # ||A x - lam M x|| / ||M x||
    converged: bool = True
    iterations: int = 0
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def head(self, k: int) -> "Spectrum":
        return Spectrum(self.eigenvalues[:k], self.eigenvectors[:, :k], self.residuals[:k],
                        self.converged, self.iterations, dict(self.info))

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["index", "eigenvalue", "residual"])
            for i, (lam, res) in enumerate(zip(self.eigenvalues, self.residuals)):
                out.writerow([i, f"{lam:.17g}", f"{res:.17g}"])


def residual_norms(A, M, values, vectors) -> np.ndarray:
    """Relative residuals ||A x - lam M x|| / ||M x|| per column."""
    MX = M @ vectors
    R = A @ vectors - MX * values
    return np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(MX, axis=0), 1e-300)


@dataclass
class ZeroEigenspace:
    basis: np.ndarray  # (n, d)
    eigenvalues: np.ndarray
    cutoff_index: int  # number of zero modes
    gap: float  # relative gap at the cut (inf when the cut follows an exact zero)
    inconclusive: bool
    all_eigenvalues: np.ndarray

    @property
    def dimension(self) -> int:
        return self.cutoff_index


def relative_gaps(values, noise_floor: float = 0.0) -> np.ndarray:
    """lam[i+1] / max(|lam[i]|, noise_floor) for consecutive eigenvalues."""
    lam = np.asarray(values, dtype=float)
    lo = np.maximum(np.abs(lam[:-1]), noise_floor)
    hi = lam[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        gaps = np.where(lo > 0, hi / lo, np.where(hi > 0, np.inf, 1.0))
    return gaps


def zero_eigenspace(spectrum: Spectrum, M=None, gap_factor: float = 1e3,
                    noise_floor: float = 1e-8) -> ZeroEigenspace:
    """Eigenvectors below the largest relative eigenvalue gap, if that gap exceeds ``gap_factor``.

    The relative gap after index i is lam[i+1] / max(|lam[i]|, noise_floor).
    The floor keeps a rounding-level eigenvalue (an exactly represented
    Killing field, say 1e-15) from creating a spurious gap to a genuine but
    small discretization-level zero mode (say 1e-7).  When no gap reaches
    ``gap_factor`` the result is empty and flagged inconclusive.
    ``M`` is accepted for interface symmetry; the basis is returned as
    computed (already M-orthonormal).
    """
    lam = np.asarray(spectrum.eigenvalues, dtype=float)
    if len(lam) < 2:
        return ZeroEigenspace(spectrum.eigenvectors[:, :0], lam[:0], 0, float("nan"), True, lam)
    gaps = relative_gaps(lam, noise_floor)
    i = int(np.argmax(gaps))
    if not gaps[i] >= gap_factor:
        return ZeroEigenspace(spectrum.eigenvectors[:, :0], lam[:0], 0, float(gaps[i]), True, lam)
    d = i + 1
    return ZeroEigenspace(spectrum.eigenvectors[:, :d], lam[:d], d, float(gaps[i]), False, lam)
