"""Second-order time-derivative arithmetic (2-jets).

A 2-jet carries a value together with its first and second time
derivatives along a trajectory. Propagating jets through the algebraic
operations used by the flatness and attitude maps yields exact analytic
derivatives, with no finite differencing anywhere.

All operations broadcast over leading axes, so a jet may hold a single
sample (shape ``(3,)`` vectors, scalar floats) or a whole batch
(``(N, 3)`` and ``(N,)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SJet:
    """Scalar 2-jet: value ``x``, derivative ``d``, second derivative ``dd``."""

    x: np.ndarray
    d: np.ndarray
    dd: np.ndarray

    @staticmethod
    def constant(x) -> "SJet":
        x = np.asarray(x, dtype=float)
        z = np.zeros_like(x)
        return SJet(x, z, z)

    def __add__(self, other: "SJet") -> "SJet":
        return SJet(self.x + other.x, self.d + other.d, self.dd + other.dd)

    def __sub__(self, other: "SJet") -> "SJet":
        return SJet(self.x - other.x, self.d - other.d, self.dd - other.dd)

    def __neg__(self) -> "SJet":
        return SJet(-self.x, -self.d, -self.dd)

    def __mul__(self, other) -> "SJet":
        if isinstance(other, SJet):
            return SJet(
                self.x * other.x,
                self.d * other.x + self.x * other.d,
                self.dd * other.x + 2.0 * self.d * other.d + self.x * other.dd,
            )
        return SJet(self.x * other, self.d * other, self.dd * other)

    __rmul__ = __mul__

    def __truediv__(self, other: "SJet") -> "SJet":
        # From x = q*y: solve successively for q, q', q''.
        q = self.x / other.x
        qd = (self.d - q * other.d) / other.x
        qdd = (self.dd - 2.0 * qd * other.d - q * other.dd) / other.x
        return SJet(q, qd, qdd)

    def sqrt(self) -> "SJet":
        r = np.sqrt(self.x)
        rd = self.d / (2.0 * r)
        rdd = (self.dd - 2.0 * rd * rd) / (2.0 * r)
        return SJet(r, rd, rdd)

    def _chain(self, f0, f1, f2) -> "SJet":
        return SJet(f0, f1 * self.d, f2 * self.d * self.d + f1 * self.dd)

    def sin(self) -> "SJet":
        s, c = np.sin(self.x), np.cos(self.x)
        return self._chain(s, c, -s)

    def cos(self) -> "SJet":
        s, c = np.sin(self.x), np.cos(self.x)
        return self._chain(c, -s, -c)

    def arctan(self) -> "SJet":
        den = 1.0 + self.x * self.x
        return self._chain(np.arctan(self.x), 1.0 / den, -2.0 * self.x / den**2)

    def arcsin(self) -> "SJet":
        den = 1.0 - self.x * self.x
        return self._chain(
            np.arcsin(self.x), den**-0.5, self.x * den**-1.5
        )


@dataclass(frozen=True)
class VJet:
    """Vector 2-jet over arrays with a trailing axis of length 3."""

    x: np.ndarray
    d: np.ndarray
    dd: np.ndarray

    @staticmethod
    def constant(x) -> "VJet":
        x = np.asarray(x, dtype=float)
        z = np.zeros_like(x)
        return VJet(x, z, z)

    @staticmethod
    def from_derivatives(x, d, dd) -> "VJet":
        return VJet(np.asarray(x, float), np.asarray(d, float), np.asarray(dd, float))

    def __add__(self, other: "VJet") -> "VJet":
        return VJet(self.x + other.x, self.d + other.d, self.dd + other.dd)

    def __sub__(self, other: "VJet") -> "VJet":
        return VJet(self.x - other.x, self.d - other.d, self.dd - other.dd)

    def __neg__(self) -> "VJet":
        return VJet(-self.x, -self.d, -self.dd)

    def scale(self, s: SJet) -> "VJet":
        sx, sd, sdd = s.x[..., None], s.d[..., None], s.dd[..., None]
        return VJet(
            sx * self.x,
            sd * self.x + sx * self.d,
            sdd * self.x + 2.0 * sd * self.d + sx * self.dd,
        )

    def cross(self, other: "VJet") -> "VJet":
        a, b = self, other
        return VJet(
            np.cross(a.x, b.x),
            np.cross(a.d, b.x) + np.cross(a.x, b.d),
            np.cross(a.dd, b.x) + 2.0 * np.cross(a.d, b.d) + np.cross(a.x, b.dd),
        )

    def dot(self, other: "VJet") -> SJet:
        a, b = self, other

        def _d(u, v):
            return np.sum(u * v, axis=-1)

        return SJet(
            _d(a.x, b.x),
            _d(a.d, b.x) + _d(a.x, b.d),
            _d(a.dd, b.x) + 2.0 * _d(a.d, b.d) + _d(a.x, b.dd),
        )

    def norm(self) -> SJet:
        return self.dot(self).sqrt()

    def unit(self) -> "VJet":
        n = self.norm()
        inv = SJet.constant(np.ones_like(n.x)) / n
        return self.scale(inv)

    def component(self, i: int) -> SJet:
        return SJet(self.x[..., i], self.d[..., i], self.dd[..., i])
