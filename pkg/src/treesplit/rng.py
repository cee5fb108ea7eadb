"""Deterministic randomness plumbing.

All stochastic components run off one explicit master seed.  Sub-streams
are derived by hashing, never by sharing generator state, so replications
are order-independent: the i-th interval sees the same randomness whether
or not the (i-1)-th was run, and split coins are a pure function of
(stream seed, user id, tree depth).  The latter makes split decisions
automatically identical across protocols driven from the same seed, which
is what the cross-protocol slot-count comparisons rely on.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
# 2^-53, for mapping the top 53 bits of a mixed word to [0, 1).
_INV53 = 1.0 / (1 << 53)


def derive_seed(master: int, *parts) -> int:
    """Derive a 63-bit sub-stream seed from a master seed and labels.

    The labels are folded through SHA-256, so any hashable-reprable mix of
    strings and integers yields an independent, reproducible stream id.
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(repr(part).encode())
    return int.from_bytes(h.digest()[:8], "big") >> 1


def _splitmix64(x: int) -> int:
    """One splitmix64 scramble round; a cheap, well-mixed 64-bit permutation."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def coin_uniform(seed: int, uid: int, depth: int) -> float:
    """Uniform(0,1) variate keyed by (seed, uid, depth).

    Counter-based construction: the value is a pure function of the key,
    so draws commute and a user's coin at a given tree depth does not
    depend on how many coins anybody else consumed.
    """
    x = _splitmix64((seed ^ (uid * 0xA24BAED4963EE407)) & _MASK64)
    x = _splitmix64((x ^ (depth * 0x9FB21C651E98DF25)) & _MASK64)
    return (x >> 11) * _INV53


class CoinSource:
    """Bernoulli split coins keyed by (user id, depth).

    ``flip(uid, depth)`` returns True when the user joins the left group.
    A scripted table of forced outcomes can be layered on top for
    reproducing hand-constructed split sequences.
    """

    def __init__(self, seed: int, p: float, script: dict | None = None):
        self.seed = int(seed)
        self.p = float(p)
        self.script = dict(script) if script else None

    def flip(self, uid: int, depth: int) -> bool:
        if self.script is not None:
            key = (uid, depth)
            if key in self.script:
                return bool(self.script[key])
        return coin_uniform(self.seed, uid, depth) < self.p


def scripted_coins(script: dict, p: float = 0.5, seed: int = 0) -> CoinSource:
    """CoinSource with forced outcomes for the given (uid, depth) keys."""
    return CoinSource(seed=seed, p=p, script=script)


def stream_seed(base: int, index: int) -> int:
    """Cheap counter-based child seed for the ``index``-th sub-stream.

    ``base`` should come from :func:`derive_seed`; one splitmix round per
    index then avoids hashing inside hot loops that need a fresh stream
    per interval.
    """
    return _splitmix64((base ^ (index * 0x9E3779B97F4A7C15)) & _MASK64) >> 1
