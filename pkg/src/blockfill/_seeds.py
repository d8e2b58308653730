"""Deterministic seed derivation.

Every random stream in the package is derived from one master seed with a
splitmix64-style mixer, so adding methods or reordering work never shifts
masks or model fits.
"""

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Mix integer parts into one 64-bit seed. Order-sensitive."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h = _splitmix64(h ^ (int(p) & _MASK64))
        h = _splitmix64(h)
    return h
