"""Exact arithmetic for the quasi-periodic modulation frequency.

Float comparison cannot tell an exact integer relation
``n1 + a*n2 + a^2*n3 = 0`` apart from a very small nonzero value, and the
Diophantine validators need that distinction.  The frequency is therefore
carried either as an exact rational or as a quadratic surd
``(p + q*sqrt(d)) / r`` and integer combinations of ``(1, a, a^2)`` are
evaluated symbolically.  Magnitude comparisons that cannot be decided in
integers fall back to 50-digit arithmetic, far below any threshold a desk
scale search window can produce.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt

import mpmath

_DPS = 50


def _is_square(n: int) -> bool:
    return n >= 0 and isqrt(n) ** 2 == n


@dataclass(frozen=True)
class TripleValue:
    """Value of n1 + a*n2 + a^2*n3 with an exact zero verdict."""

    is_zero: bool
    magnitude: mpmath.mpf  # exact zero reported as mpf(0)


@dataclass(frozen=True)
class Alpha:
    """A frequency in (0, 1) with an exact backing representation.

    kind "rational": value = num/den in lowest terms.
    kind "quadratic": value = (p + q*sqrt(d))/r, d > 0 not a perfect square.
    Convergents of the continued fraction are available for degeneracy
    diagnostics; the exact-zero decisions never rely on them.
    """

    kind: str
    num: int = 0
    den: int = 1
    p: int = 0
    q: int = 0
    r: int = 1
    d: int = 0
    _mp: mpmath.mpf = field(default=None, repr=False, compare=False)

    # -- constructors ----------------------------------------------------

    @staticmethod
    def from_fraction(num: int, den: int) -> "Alpha":
        if den == 0:
            raise ValueError("zero denominator")
        f = Fraction(num, den)
        return Alpha(kind="rational", num=f.numerator, den=f.denominator)

    @staticmethod
    def from_decimal(text: str) -> "Alpha":
        """Exact rational read of a decimal string such as '0.6180339887'."""
        f = Fraction(text)
        return Alpha(kind="rational", num=f.numerator, den=f.denominator)

    @staticmethod
    def quadratic(p: int, q: int, r: int, d: int) -> "Alpha":
        if r == 0:
            raise ValueError("zero denominator")
        if d <= 0 or _is_square(d):
            raise ValueError("d must be positive and not a perfect square")
        if q == 0:
            raise ValueError("q = 0 is rational; use from_fraction")
        return Alpha(kind="quadratic", p=p, q=q, r=r, d=d)

    @staticmethod
    def golden() -> "Alpha":
        """(sqrt(5) - 1)/2, the canonical quadratic irrational in (0, 1)."""
        return Alpha.quadratic(p=-1, q=1, r=2, d=5)

    # -- numerics --------------------------------------------------------

    def _mpf(self) -> mpmath.mpf:
        with mpmath.workdps(_DPS):
            if self.kind == "rational":
                return mpmath.mpf(self.num) / self.den
            return (self.p + self.q * mpmath.sqrt(self.d)) / self.r

    @property
    def value(self) -> float:
        return float(self._mpf())

    @property
    def is_rational(self) -> bool:
        return self.kind == "rational"

    def combo(self, n1: int, n2: int, n3: int) -> TripleValue:
        """Evaluate n1 + a*n2 + a^2*n3; the zero verdict is exact."""
        with mpmath.workdps(_DPS):
            if self.kind == "rational":
                # numerator over den^2, all integer
                numer = n1 * self.den**2 + n2 * self.num * self.den + n3 * self.num**2
                if numer == 0:
                    return TripleValue(True, mpmath.mpf(0))
                return TripleValue(False, abs(mpmath.mpf(numer)) / self.den**2)
            # (A + B*sqrt(d)) / r^2 with A, B integer
            a_part = n1 * self.r**2 + n2 * self.p * self.r + n3 * (self.p**2 + self.q**2 * self.d)
            b_part = n2 * self.q * self.r + 2 * n3 * self.p * self.q
            if a_part == 0 and b_part == 0:
                return TripleValue(True, mpmath.mpf(0))
            mag = abs(a_part + b_part * mpmath.sqrt(self.d)) / self.r**2
            return TripleValue(False, mag)

    def convergents(self, count: int = 24) -> list[Fraction]:
        """Continued-fraction convergents p_k/q_k.

        Rational input terminates exactly.  Quadratic input is expanded at
        50-digit precision, plenty for lattice windows of desk size.
        """
        terms: list[int] = []
        if self.kind == "rational":
            a, b = self.num, self.den
            while b and len(terms) < count:
                terms.append(a // b)
                a, b = b, a - (a // b) * b
        else:
            with mpmath.workdps(_DPS):
                x = self._mpf()
                for _ in range(count):
                    fl = int(mpmath.floor(x))
                    terms.append(fl)
                    frac = x - fl
                    if frac < mpmath.mpf(10) ** (-_DPS + 8):
                        break
                    x = 1 / frac
        convs: list[Fraction] = []
        p_prev, p_cur = 1, terms[0] if terms else 0
        q_prev, q_cur = 0, 1
        if terms:
            convs.append(Fraction(p_cur, q_cur))
        for a in terms[1:]:
            p_prev, p_cur = p_cur, a * p_cur + p_prev
            q_prev, q_cur = q_cur, a * q_cur + q_prev
            convs.append(Fraction(p_cur, q_cur))
        return convs


def as_alpha(value) -> Alpha:
    """Coerce user input (Alpha, Fraction, decimal string, float) to Alpha."""
    if isinstance(value, Alpha):
        return value
    if isinstance(value, Fraction):
        return Alpha.from_fraction(value.numerator, value.denominator)
    if isinstance(value, str):
        return Alpha.from_decimal(value)
    if isinstance(value, float):
        if not (value == value) or value in (float("inf"), float("-inf")):
            raise ValueError("non-finite frequency")
        # floats are exact binary rationals
        f = Fraction(value).limit_denominator(10**15)
        return Alpha(kind="rational", num=f.numerator, den=f.denominator)
    if isinstance(value, int):
        return Alpha.from_fraction(value, 1)
    raise TypeError(f"cannot interpret {type(value)!r} as a frequency")
