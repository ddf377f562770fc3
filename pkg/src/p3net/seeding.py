"""Deterministic seed expansion.

Every derived seed is produced by folding integer keys into a splitmix64
state, so per-task / per-workspace streams depend only on the master seed and
the key path, never on execution order.
"""

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (state advanced by the golden gamma)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Fold ``keys`` into ``master``; returns a 64-bit seed."""
    h = splitmix64(master & MASK64)
    for k in keys:
        h = splitmix64(h ^ (k & MASK64))
    return h


def seed32(master: int, *keys: int) -> int:
    """Like :func:`derive_seed` but truncated to 32 bits (MT19937 seeds)."""
    return derive_seed(master, *keys) & 0xFFFFFFFF
