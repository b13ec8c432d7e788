"""Differential operators with polynomial coefficients.

An operator is a dict mapping ``(pt, p1, p2, kt, k1, k2)`` to a coefficient,
standing for the term  c * t^pt x1^p1 x2^p2 d_t^kt d_1^k1 d_2^k2.
Composition with d_alpha and the boosts L_a is exact, so products like
d^I L^J can be expanded once and evaluated on derivative jets.
"""
from __future__ import annotations

from itertools import combinations_with_replacement, product

import numpy as np

from .errors import MissingDerivativeError

PARTIALS = ("dt", "d1", "d2")
BOOSTS = ("L1", "L2")

IDENTITY = {(0, 0, 0, 0, 0, 0): 1.0}


def _add(out, key, c):
    if c == 0:
        return
    v = out.get(key, 0.0) + c
    if v == 0:
        out.pop(key, None)
    else:
        out[key] = v


def _partial(op, axis):
    """d_axis composed on the left of ``op`` (product rule on the coefficients)."""
    out = {}
    for key, c in op.items():
        p = list(key[:3])
        k = list(key[3:])
        if p[axis]:
            q = p.copy()
            q[axis] -= 1
            _add(out, tuple(q) + tuple(k), c * p[axis])
        k2 = k.copy()
        k2[axis] += 1
        _add(out, tuple(p) + tuple(k2), c)
    return out


def _times(op, axis):
    """Multiply every coefficient by the coordinate ``axis``."""
    out = {}
    for key, c in op.items():
        p = list(key[:3])
        p[axis] += 1
        _add(out, tuple(p) + key[3:], c)
    return out


def _sum(a, b):
    out = dict(a)
    for key, c in b.items():
        _add(out, key, c)
    return out


def apply_field(V: str, op: dict) -> dict:
    """Return the operator V o op."""
    if V in ("dt", "d0"):
        return _partial(op, 0)
    if V == "d1":
        return _partial(op, 1)
    if V == "d2":
        return _partial(op, 2)
    if V in BOOSTS:
        a = 1 if V == "L1" else 2
        # L_a = x^a d_t + t d_a
        return _sum(_times(_partial(op, 0), a), _times(_partial(op, a), 0))
    raise ValueError(f"unknown vector field {V!r}")


def word_operator(word) -> dict:
    """Expand a word of vector fields, applied right to left, into an operator."""
    op = dict(IDENTITY)
    for V in reversed(tuple(word)):
        op = apply_field(V, op)
    return op


def order(op: dict) -> int:
    return max((sum(k[3:]) for k in op), default=0)


def vector_field_words(max_order: int = 2):
    """All words d^I L^J with |I| + |J| <= max_order.

    I is an unordered multiset of partials (they commute), J an ordered
    tuple of boosts. For order 2 this gives 22 words.
    """
    words = []
    for n in range(max_order + 1):
        for ni in range(n + 1):
            nj = n - ni
            for I in combinations_with_replacement(PARTIALS, ni):
                for J in product(BOOSTS, repeat=nj):
                    words.append(tuple(I) + tuple(J))
    return words


def word_label(word) -> str:
    return "id" if not word else "*".join(word)


def evaluate(op: dict, jet: dict, t, x1, x2):
    """Evaluate ``op u`` from a jet {(kt, k1, k2): values} at points (t, x1, x2)."""
    t, x1, x2 = (np.asarray(a, dtype=float) for a in (t, x1, x2))
    out = np.zeros(np.broadcast(t, x1, x2).shape)
    powers = {}

    def power(arr, axis, n):
        key = (axis, n)
        if key not in powers:
            powers[key] = arr ** n if n > 1 else arr
        return powers[key]

    coords = (t, x1, x2)
    for key, c in op.items():
        k = key[3:]
        if k not in jet:
            raise MissingDerivativeError(f"jet lacks derivative {k}")
        term = c * jet[k]
        for axis in range(3):
            if key[axis]:
                term = term * power(coords[axis], axis, key[axis])
        out = out + term
    return out
