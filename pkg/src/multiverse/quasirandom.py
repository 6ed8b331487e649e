"""Low-discrepancy sequences and seed-substream plumbing.

Sobol points are produced with the Gray-code construction over published
Joe-Kuo direction numbers, supported for up to 16 dimensions.  All other
randomness in the package flows from a single run seed through named
substreams so that changing one component never perturbs another's draws.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ValidationError

MAX_DIMENSION = 16
_NBITS = 32
_SCALE = float(2**_NBITS)

# Joe-Kuo direction-number rows (s, a, m_1..m_s) for dimensions 2..16.
# Dimension 1 is the van der Corput sequence in base 2.
_JOE_KUO = (
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
    (5, 4, (1, 1, 5, 5, 5)),
    (5, 7, (1, 1, 7, 11, 19)),
    (5, 11, (1, 1, 5, 1, 1)),
    (5, 13, (1, 1, 1, 3, 11)),
    (5, 14, (1, 3, 5, 5, 31)),
    (6, 1, (1, 3, 3, 9, 7, 49)),
    (6, 13, (1, 1, 1, 15, 21, 21)),
    (6, 16, (1, 3, 1, 13, 27, 49)),
)


def _direction_integers(dim: int) -> np.ndarray:
    """Direction integers v_1..v_NBITS for one dimension, scaled to 2^NBITS."""
    if dim == 1:
        return np.array(
            [1 << (_NBITS - k) for k in range(1, _NBITS + 1)], dtype=np.uint64
        )
    s, a, m_init = _JOE_KUO[dim - 2]
    m = list(m_init)
    for k in range(s, _NBITS):
        new = m[k - s] ^ (m[k - s] << s)
        for j in range(1, s):
            if (a >> (s - 1 - j)) & 1:
                new ^= m[k - j] << j
        m.append(new)
    return np.array(
        [m[k] << (_NBITS - 1 - k) for k in range(_NBITS)], dtype=np.uint64
    )


class SobolSequence:
    """Gray-code Sobol sequence over the unit cube [0,1)^dim.

    ``skip`` positions the stream: the default of 1 drops the all-zeros
    point at index 0.  An optional per-dimension digital shift (XOR of
    the integer state) decorrelates streams across named uses while
    preserving low discrepancy.
    """

    def __init__(self, dim: int, skip: int = 1, shift: np.ndarray | None = None):
        if not 1 <= dim <= MAX_DIMENSION:
            raise ValidationError(
                f"Sobol sequence supports 1..{MAX_DIMENSION} dimensions, got {dim}"
            )
        self.dim = dim
        self._v = np.stack([_direction_integers(j + 1) for j in range(dim)])
        self._state = np.zeros(dim, dtype=np.uint64)
        self._index = 0
        if shift is None:
            self._shift = np.zeros(dim, dtype=np.uint64)
        else:
            shift = np.asarray(shift)
            if np.issubdtype(shift.dtype, np.floating):
                # fractional shift in [0,1): convert to the equivalent bit mask
                shift = (shift % 1.0 * _SCALE).astype(np.uint64)
            self._shift = shift.astype(np.uint64) & np.uint64(2**_NBITS - 1)
        for _ in range(skip):
            self._advance()

    def _advance(self) -> None:
        # Gray-code update: flip the direction of the lowest zero bit of the index.
        i = self._index
        c = ((i + 1) & -(i + 1)).bit_length() - 1
        self._state ^= self._v[:, c]
        self._index = i + 1

    def take(self, n: int) -> np.ndarray:
        """Next ``n`` points as an (n, dim) array."""
        out = np.empty((n, self.dim))
        for row in range(n):
            out[row] = (self._state ^ self._shift) / _SCALE
            self._advance()
        return out


def sobol_points(n: int, dim: int, skip: int = 1, shift: np.ndarray | None = None) -> np.ndarray:
    """First ``n`` points of a (possibly shifted) Sobol stream."""
    return SobolSequence(dim, skip=skip, shift=shift).take(n)


def substream_seed(seed: int, *names: str | int) -> int:
    """Stable 63-bit seed for a named substream of the run seed.

    Names hash via crc32 so results do not depend on interpreter hash
    randomization.
    """
    acc = seed & 0xFFFFFFFFFFFFFFFF
    for name in names:
        token = str(name).encode()
        acc = (acc * 0x100000001B3 + zlib.crc32(token)) & 0xFFFFFFFFFFFFFFFF
    return acc >> 1


def substream_rng(seed: int, *names: str | int) -> np.random.Generator:
    """Seeded numpy generator for the named substream."""
    return np.random.default_rng(substream_seed(seed, *names))


def shifted_sobol_stream(dim: int, seed: int, *names: str | int) -> SobolSequence:
    """Sobol stream with a digital shift derived from the named substream."""
    rng = substream_rng(seed, *names)
    shift = rng.integers(0, 2**_NBITS, size=dim, dtype=np.uint64)
    return SobolSequence(dim, skip=1, shift=shift)
