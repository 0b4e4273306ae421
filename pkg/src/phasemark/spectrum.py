"""Per-channel 2D DFT helpers and Hermitian-symmetry bookkeeping.

Spectra are plain complex ``(H, W)`` numpy arrays in unshifted order (DC at
``[0, 0]``). The forward transform is unnormalized and the inverse carries
the full ``1/(H*W)`` factor. Block layouts are described in the centered
view, where ``du, dv`` are signed offsets from DC; :func:`to_unshifted`
maps them back to array indices.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable

import numpy as np

from .errors import ContractError, ShapeError, SymmetryError

RESTORED_TOLERANCE = 1e-6


class RealizeMode(str, enum.Enum):
    FREQUENCY_RESTORED = "restored"
    CUTOFF_IMAGINARY = "cutoff"


def to_unshifted(d: int, n: int) -> int:
    """Centered offset -> array index (DC at 0, negatives wrap to the end)."""
    return d if d >= 0 else n + d


def to_centered(i: int, n: int) -> int:
    """Array index -> centered offset in ``[-n/2, n/2)``."""
    return i - n if i >= (n + 1) // 2 else i


def mirror(i, j, h: int, w: int):
    """Index of the conjugate partner of bin ``(i, j)``; works on arrays too."""
    return (-np.asarray(i)) % h, (-np.asarray(j)) % w


def is_self_conjugate(i, j, h: int, w: int):
    return ((2 * np.asarray(i)) % h == 0) & ((2 * np.asarray(j)) % w == 0)


def dft2(plane: np.ndarray) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or min(plane.shape) < 2:
        raise ShapeError(f"dft2 needs a 2D plane of at least 2x2, got {plane.shape}")
    return np.fft.fft2(plane)


def idft2(spec: np.ndarray) -> np.ndarray:
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.ndim != 2 or min(spec.shape) < 2:
        raise ShapeError(f"idft2 needs a 2D spectrum of at least 2x2, got {spec.shape}")
    return np.fft.ifft2(spec)


def _as_positions(touched) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(touched, np.ndarray):
        touched = list(touched)
    pos = np.asarray(touched, dtype=np.int64).reshape(-1, 2)
    return pos[:, 0], pos[:, 1]


def enforce_hermitian(spec: np.ndarray, touched: Iterable[tuple[int, int]] | np.ndarray) -> np.ndarray:
    """Overwrite the mirror of every touched bin with the bin's conjugate.

    Returns a new array; bins outside ``touched`` and their mirrors keep
    their values. Self-conjugate bins (DC and Nyquist corners) cannot be
    touched because their value must already be real.
    """
    out = np.array(spec, dtype=np.complex128, copy=True)
    rows, cols = _as_positions(touched)
    if rows.size == 0:
        return out
    h, w = out.shape
    bad = is_self_conjugate(rows, cols, h, w)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ContractError(f"bin ({rows[k]}, {cols[k]}) is self-conjugate and cannot be modulated")
    mr, mc = mirror(rows, cols, h, w)
    out[mr, mc] = np.conj(out[rows, cols])
    return out


def imag_residual(grid: np.ndarray) -> float:
    return float(np.max(np.abs(grid.imag))) if grid.size else 0.0


def realize(grid: np.ndarray, mode: RealizeMode | str) -> np.ndarray:
    """Turn an inverse-transform output into a real plane.

    ``restored`` mode checks that the imaginary residual stays below
    ``1e-6 * (1 + max|Re|)``; ``cutoff`` drops the imaginary part silently.
    """
    mode = RealizeMode(mode)
    grid = np.asarray(grid)
    if mode is RealizeMode.FREQUENCY_RESTORED and np.iscomplexobj(grid):
        resid = imag_residual(grid)
        limit = RESTORED_TOLERANCE * (1.0 + float(np.max(np.abs(grid.real))))
        if resid >= limit:
            raise SymmetryError(f"imaginary residual {resid:.3g} exceeds {limit:.3g}; a mirror bin was missed")
    return np.array(grid.real, dtype=np.float64)
