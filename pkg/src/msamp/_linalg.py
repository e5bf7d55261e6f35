"""Small dense linear-algebra helpers shared across modules."""

from __future__ import annotations

import numpy as np


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circular complex Gaussian samples, E|z|^2 = 1."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root with eigenvalues clamped at zero."""
    w, v = np.linalg.eigh(herm(np.asarray(a, dtype=complex)))
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ v.conj().T


def psd_inv_sqrt(a: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    w, v = np.linalg.eigh(herm(np.asarray(a, dtype=complex)))
    if w.min() <= rtol * max(abs(w).max(), 1e-300):
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.conj().T


def logdet_pd(a: np.ndarray) -> float:
    """log det of a Hermitian positive-definite matrix via Cholesky."""
    c = np.linalg.cholesky(herm(np.asarray(a, dtype=complex)))
    return float(2.0 * np.sum(np.log(np.real(np.diag(c)))))


def rel_fro(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b||_F / ||b||_F."""
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
