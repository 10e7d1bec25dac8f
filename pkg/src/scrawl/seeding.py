"""Deterministic seed derivation for every pipeline stage.

One master seed fans out into independent stage seeds through a
splitmix64 mix of FNV-hashed text labels:

    h = splitmix64(master); for each label: h = splitmix64(h ^ fnv1a64(label))

The same (master, labels) pair always yields the same 64-bit seed, and any
label change decorrelates the stream.  Stages re-derive their seeds from
the config, so running stages separately or through `experiment` gives
identical randomness.
"""

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive_seed(master: int, *labels) -> int:
    h = splitmix64(int(master) & _MASK)
    for label in labels:
        h = splitmix64(h ^ _fnv1a64(str(label)))
    return h
