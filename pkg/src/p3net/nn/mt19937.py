"""MT19937 with the reference ``init_genrand`` seeding, vectorised over numpy.

Only raw 32-bit outputs are exposed; dropout compares them against an integer
threshold, so no float conversion is involved.
"""
from __future__ import annotations

import numpy as np

N = 624
M = 397
MATRIX_A = np.uint32(0x9908B0DF)
UPPER = np.uint32(0x80000000)
LOWER = np.uint32(0x7FFFFFFF)

# Twist in chunks whose inputs are already final: entries [0, 227) read only
# old words, later chunks read words produced by earlier chunks.
_CHUNKS = ((0, N - M), (N - M, 2 * (N - M)), (2 * (N - M), N - 1), (N - 1, N))


class Mt19937:
    def __init__(self, seed: int = 5489):
        self.seed(seed)

    def seed(self, seed: int) -> None:
        mt = [0] * N
        mt[0] = seed & 0xFFFFFFFF
        for i in range(1, N):
            prev = mt[i - 1]
            mt[i] = (1812433253 * (prev ^ (prev >> 30)) + i) & 0xFFFFFFFF
        self.mt = np.array(mt, dtype=np.uint32)
        self.index = N

    def _twist(self) -> None:
        mt = self.mt
        for lo, hi in _CHUNKS:
            i = np.arange(lo, hi)
            y = (mt[i] & UPPER) | (mt[(i + 1) % N] & LOWER)
            mag = np.where(y & np.uint32(1), MATRIX_A, np.uint32(0))
            mt[i] = mt[(i + M) % N] ^ (y >> np.uint32(1)) ^ mag
        self.index = 0

    @staticmethod
    def _temper(y: np.ndarray) -> np.ndarray:
        y = y ^ (y >> np.uint32(11))
        y = y ^ ((y << np.uint32(7)) & np.uint32(0x9D2C5680))
        y = y ^ ((y << np.uint32(15)) & np.uint32(0xEFC60000))
        return y ^ (y >> np.uint32(18))

    def words(self, n: int) -> np.ndarray:
        """Next ``n`` tempered 32-bit outputs, in generation order."""
        out = np.empty(n, dtype=np.uint32)
        filled = 0
        while filled < n:
            if self.index >= N:
                self._twist()
            take = min(n - filled, N - self.index)
            out[filled:filled + take] = self._temper(self.mt[self.index:self.index + take])
            self.index += take
            filled += take
        return out

    def next_u32(self) -> int:
        return int(self.words(1)[0])

    def getstate(self) -> tuple[np.ndarray, int]:
        return self.mt.copy(), self.index

    def setstate(self, state) -> None:
        mt, index = state
        self.mt = np.array(mt, dtype=np.uint32).copy()
        self.index = int(index)

    def copy(self) -> "Mt19937":
        other = Mt19937.__new__(Mt19937)
        other.setstate(self.getstate())
        return other
