"""Abelian group actions G x S -> S used by the key agreement.

Two backends are provided.  Both take G = (Z_q^*, *), q prime:

* ``ModExpAction``: S is the order-q subgroup of F_p^*, and g acts on h by
  h -> h^g mod p.
* ``EllipticAction``: S is a subgroup of prime order q of the points of a
  short Weierstrass curve over F_p, and g acts on P by P -> gP.

Scalars are plain ints in [1, q-1].  Set points are ints (modexp), ``(x, y)``
tuples (elliptic) or the ``INFINITY`` marker, which is never an orbit point.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Union

from .errors import ContextError, InvalidPointError, ParameterError


class _Infinity:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()

SetPoint = Union[int, tuple, _Infinity]


def is_prime(n: int) -> bool:
    """Trial division; adequate for desk-scale parameters only."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for d in range(3, math.isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


class GroupAction:
    """Operations shared by both backends.

    Subclasses provide ``q``, ``base``, ``backend``, ``_act``, ``validate_point``
    and the text codec.
    """

    q: int
    backend: str

    @property
    def base(self) -> SetPoint:
        raise NotImplementedError

    def check_scalar(self, g) -> int:
        if not _is_int(g):
            raise ContextError(f"scalar must be an int, got {type(g).__name__}")
        if not 1 <= g < self.q:
            raise ContextError(f"scalar {g} is not in Z_{self.q}^*")
        return g

    def check_point(self, x) -> SetPoint:
        self._check_point_type(x)
        if not self.validate_point(x):
            raise InvalidPointError(f"{x!r} is not in the orbit of {self.base!r}")
        return x

    def compose(self, *scalars: int) -> int:
        for g in scalars:
            self.check_scalar(g)
        return reduce(lambda a, b: a * b % self.q, scalars, 1)

    def invert(self, g: int) -> int:
        self.check_scalar(g)
        # extended Euclid; q is prime so the gcd is always 1
        r0, r1, t0, t1 = self.q, g, 0, 1
        while r1:
            k = r0 // r1
            r0, r1 = r1, r0 - k * r1
            t0, t1 = t1, t0 - k * t1
        return t0 % self.q

    def act(self, g: int, x: SetPoint) -> SetPoint:
        self.check_scalar(g)
        self.check_point(x)
        return self._act(g, x)

    def random_scalar(self, rng: random.Random, nontrivial: bool = False) -> int:
        """Uniform draw from Z_q^*, or from Z_q^* minus the identity."""
        if nontrivial:
            if self.q < 3:
                raise ParameterError("Z_q^* has no non-identity element for q = 2")
            return rng.randint(2, self.q - 1)
        return rng.randint(1, self.q - 1)

    def random_orbit_point(self, rng: random.Random, base: SetPoint | None = None) -> SetPoint:
        base = self.base if base is None else base
        self.check_point(base)
        return self._act(self.random_scalar(rng), base)

    def orbit(self, point: SetPoint | None = None) -> list:
        """All points g * point for g in Z_q^*, in order of g."""
        point = self.base if point is None else point
        return [self.act(g, point) for g in range(1, self.q)]

    def encode_many(self, points: Iterable[SetPoint]) -> str:
        return ";".join(self.encode(x) for x in points)

    def decode_many(self, text: str) -> tuple:
        return tuple(self.decode(t) for t in text.split(";"))

    # backend hooks
    def _check_point_type(self, x) -> None:
        raise NotImplementedError

    def _act(self, g: int, x: SetPoint) -> SetPoint:
        raise NotImplementedError

    def validate_point(self, x) -> bool:
        raise NotImplementedError

    def encode(self, x: SetPoint) -> str:
        raise NotImplementedError

    def decode(self, text: str) -> SetPoint:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ModExpAction(GroupAction):
    p: int
    q: int
    s: int

    backend = "modexp"

    def __post_init__(self):
        if not is_prime(self.p):
            raise ParameterError(f"p = {self.p} is not prime")
        if not is_prime(self.q):
            raise ParameterError(f"q = {self.q} is not prime")
        if (self.p - 1) % self.q:
            raise ParameterError(f"q = {self.q} does not divide p - 1 = {self.p - 1}")
        if not 1 < self.s < self.p or _modpow(self.s, self.q, self.p) != 1:
            raise ParameterError(f"s = {self.s} does not generate the order-{self.q} subgroup")

    @property
    def base(self) -> int:
        return self.s

    def _check_point_type(self, x) -> None:
        if not _is_int(x):
            raise ContextError(f"modexp points are ints, got {x!r}")

    def validate_point(self, x) -> bool:
        return _is_int(x) and 1 < x < self.p and _modpow(x, self.q, self.p) == 1

    def _act(self, g, x):
        return _modpow(x, g, self.p)

    def encode(self, x) -> str:
        return str(x)

    def decode(self, text: str) -> int:
        return int(text)

    def to_dict(self) -> dict:
        return {"backend": "modexp", "p": self.p, "q": self.q, "s": self.s}


def _modpow(base: int, exp: int, mod: int) -> int:
    """Left-to-right square-and-multiply."""
    result = 1
    base %= mod
    for bit in bin(exp)[2:]:
        result = result * result % mod
        if bit == "1":
            result = result * base % mod
    return result


@dataclass(frozen=True)
class EllipticAction(GroupAction):
    p: int
    a: int
    b: int
    s: tuple
    q: int

    backend = "elliptic"

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(self.s))
        if not is_prime(self.p) or self.p < 5:
            raise ParameterError(f"p = {self.p} is not a prime >= 5")
        if not is_prime(self.q):
            raise ParameterError(f"q = {self.q} is not prime")
        if (4 * self.a ** 3 + 27 * self.b ** 2) % self.p == 0:
            raise ParameterError("curve is singular")
        if not self.on_curve(self.s):
            raise ParameterError(f"s = {self.s} is not on the curve")
        if self._mul(self.q, self.s) is not INFINITY:
            raise ParameterError(f"q * s is not the point at infinity (q = {self.q})")

    @property
    def base(self) -> tuple:
        return self.s

    def on_curve(self, pt) -> bool:
        if not (isinstance(pt, tuple) and len(pt) == 2 and all(map(_is_int, pt))):
            return False
        x, y = pt
        if not (0 <= x < self.p and 0 <= y < self.p):
            return False
        return (y * y - (x ** 3 + self.a * x + self.b)) % self.p == 0

    def add(self, P, Q):
        if P is INFINITY:
            return Q
        if Q is INFINITY:
            return P
        x1, y1 = P
        x2, y2 = Q
        if x1 == x2 and (y1 + y2) % self.p == 0:
            return INFINITY
        if P == Q:
            lam = (3 * x1 * x1 + self.a) * pow(2 * y1, -1, self.p)
        else:
            lam = (y2 - y1) * pow(x2 - x1, -1, self.p)
        lam %= self.p
        x3 = (lam * lam - x1 - x2) % self.p
        return (x3, (lam * (x1 - x3) - y1) % self.p)

    def _mul(self, k: int, P):
        # right-to-left double-and-add
        result, addend = INFINITY, P
        while k:
            if k & 1:
                result = self.add(result, addend)
            addend = self.add(addend, addend)
            k >>= 1
        return result

    def _check_point_type(self, x) -> None:
        if x is not INFINITY and not isinstance(x, tuple):
            raise ContextError(f"elliptic points are (x, y) tuples, got {x!r}")

    def validate_point(self, x) -> bool:
        return self.on_curve(x) and self._mul(self.q, x) is INFINITY

    def _act(self, g, x):
        return self._mul(g, x)

    def encode(self, x) -> str:
        if x is INFINITY:
            return "inf"
        return f"{x[0]},{x[1]}"

    def decode(self, text: str):
        if text == "inf":
            return INFINITY
        xs, ys = text.split(",")
        return (int(xs), int(ys))

    def to_dict(self) -> dict:
        return {"backend": "elliptic", "p": self.p, "a": self.a, "b": self.b,
                "s": list(self.s), "q": self.q}


PRESETS = {
    "modexp": ModExpAction(p=23, q=11, s=2),
    "elliptic": EllipticAction(p=17, a=2, b=2, s=(5, 1), q=19),
}


def action_from_dict(d: dict) -> GroupAction:
    """Build an action from explicit parameters (raises ParameterError)."""
    backend = d.get("backend")
    if backend == "modexp":
        return ModExpAction(p=int(d["p"]), q=int(d["q"]), s=int(d["s"]))
    if backend == "elliptic":
        s = d["s"]
        if isinstance(s, str):
            s = s.split(",")
        return EllipticAction(p=int(d["p"]), a=int(d["a"]), b=int(d["b"]),
                              s=tuple(int(v) for v in s), q=int(d["q"]))
    raise ParameterError(f"unknown backend {backend!r}")
