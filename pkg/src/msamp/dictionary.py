"""Random semi-unitary dictionaries S = sqrt(alpha) P O.

Two constructions are provided:

* ``DenseHaar``: the first L rows of an N x N Haar unitary, scaled by
  sqrt(N / L). Stored as a dense L x N matrix.
* ``SignedFourier``: sqrt(alpha) * P diag(s) F diag(s), with F the
  unitary DFT of length N, s a random sign vector and P a random row
  selection. Applied with FFTs, never materialized.

Both satisfy S S^H = alpha I_L.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._linalg import crandn


class DictKind(str, enum.Enum):
    DENSE_HAAR = "haar"
    SIGNED_FOURIER = "fourier"

    @classmethod
    def parse(cls, value) -> "DictKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"densehaar": "haar", "dense": "haar", "signedfourier": "fourier"}
        return cls(aliases.get(key, key))


def sample_haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed n x n unitary.

    QR of a complex Ginibre matrix, with the columns of Q rescaled by the
    phases of diag(R) so that the law does not depend on the LAPACK sign
    convention.
    """
    if n < 1:
        raise ValueError(f"invalid dimension n={n}")
    z = crandn(rng, (n, n))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    ph = d / np.abs(d)
    return q * ph[None, :]


@dataclass(frozen=True, eq=False)
class SemiUnitaryDictionary:
    kind: DictKind
    rows: int
    cols: int
    dense_matrix: np.ndarray | None = None
    signs: np.ndarray | None = None
    selection: np.ndarray | None = None

    def __post_init__(self):
        if not 1 <= self.rows <= self.cols:
            raise ValueError(f"need 1 <= L <= N, got L={self.rows}, N={self.cols}")
        if self.kind is DictKind.DENSE_HAAR:
            if self.dense_matrix is None or self.dense_matrix.shape != (self.rows, self.cols):
                raise ValueError("DenseHaar dictionary needs an L x N matrix")
            self.dense_matrix.setflags(write=False)
        else:
            if self.signs is None or self.selection is None:
                raise ValueError("SignedFourier dictionary needs signs and selection")
            if self.signs.shape != (self.cols,) or not np.all(np.abs(self.signs) == 1):
                raise ValueError("signs must be a length-N vector over {-1, +1}")
            if self.selection.shape != (self.rows,) or len(np.unique(self.selection)) != self.rows:
                raise ValueError("selection must hold L distinct row indices")
            if self.selection.min() < 0 or self.selection.max() >= self.cols:
                raise ValueError("selection index out of range")
            self.signs.setflags(write=False)
            self.selection.setflags(write=False)

    @property
    def alpha(self) -> float:
        return self.cols / self.rows

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @classmethod
    def from_unitary(cls, O: np.ndarray, L: int) -> "SemiUnitaryDictionary":
        """DenseHaar dictionary from an explicit N x N unitary (first L rows kept)."""
        n = O.shape[0]
        return cls(DictKind.DENSE_HAAR, L, n, dense_matrix=np.sqrt(n / L) * np.array(O[:L], dtype=complex))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """S @ X for X of shape (N,) or (N, F)."""
        X = np.asarray(X)
        if X.shape[0] != self.cols:
            raise ValueError(f"apply: expected {self.cols} rows, got {X.shape[0]}")
        if self.kind is DictKind.DENSE_HAAR:
            return self.dense_matrix @ X
        s = self.signs if X.ndim == 1 else self.signs[:, None]
        y = np.fft.fft(s * X, axis=0, norm="ortho")
        return np.sqrt(self.alpha) * (s * y)[self.selection]

    def apply_adjoint(self, Z: np.ndarray) -> np.ndarray:
        """S^H @ Z for Z of shape (L,) or (L, F)."""
        Z = np.asarray(Z)
        if Z.shape[0] != self.rows:
            raise ValueError(f"apply_adjoint: expected {self.rows} rows, got {Z.shape[0]}")
        if self.kind is DictKind.DENSE_HAAR:
            return self.dense_matrix.conj().T @ Z
        full = np.zeros((self.cols,) + Z.shape[1:], dtype=complex)
        full[self.selection] = Z
        s = self.signs if Z.ndim == 1 else self.signs[:, None]
        x = np.fft.ifft(s * full, axis=0, norm="ortho")
        return np.sqrt(self.alpha) * (s * x)

    def columns(self, idx) -> np.ndarray:
        """Selected columns of S as an L x len(idx) matrix."""
        idx = np.asarray(idx, dtype=int)
        if self.kind is DictKind.DENSE_HAAR:
            return self.dense_matrix[:, idx]
        e = np.zeros((self.cols, idx.size), dtype=complex)
        e[idx, np.arange(idx.size)] = 1.0
        return self.apply(e)

    def materialize(self) -> np.ndarray:
        if self.kind is DictKind.DENSE_HAAR:
            return np.array(self.dense_matrix)
        return self.columns(np.arange(self.cols))

    # Binary layout (little endian):
    #   8s magic b"MSDICT1\0" | u4 L | u4 N | i1 signs[N] | u4 selection[L]
    _MAGIC = b"MSDICT1\x00"

    def dump_structure(self, path) -> None:
        if self.kind is not DictKind.SIGNED_FOURIER:
            raise ValueError("only SignedFourier dictionaries have a compact dump")
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<II", self.rows, self.cols))
            fh.write(self.signs.astype("<i1").tobytes())
            fh.write(self.selection.astype("<u4").tobytes())

    @classmethod
    def load_structure(cls, path) -> "SemiUnitaryDictionary":
        raw = Path(path).read_bytes()
        if raw[:8] != cls._MAGIC:
            raise ValueError(f"{path}: not a dictionary dump")
        L, N = struct.unpack("<II", raw[8:16])
        signs = np.frombuffer(raw, dtype="<i1", count=N, offset=16).astype(float)
        sel = np.frombuffer(raw, dtype="<u4", count=L, offset=16 + N).astype(np.int64)
        return cls(DictKind.SIGNED_FOURIER, L, N, signs=signs, selection=sel)


def build_dictionary(kind, L: int, N: int, rng: np.random.Generator) -> SemiUnitaryDictionary:
    kind = DictKind.parse(kind)
    if not 1 <= L <= N:
        raise ValueError(f"need 1 <= L <= N, got L={L}, N={N}")
    if kind is DictKind.DENSE_HAAR:
        return SemiUnitaryDictionary.from_unitary(sample_haar_unitary(N, rng), L)
    signs = rng.choice(np.array([-1.0, 1.0]), size=N)
    selection = np.sort(rng.choice(N, size=L, replace=False))
    return SemiUnitaryDictionary(kind, L, N, signs=signs, selection=selection)
