"""Limit-periodic and quasi-periodic potentials on the plane.

The limit-periodic class is an ordered stack of real trigonometric layers
with doubling periods: layer r has periods ``2**(r-1) * (d1, d2)`` and
Fourier coefficients ``v[r, q]`` supported on ``2**(-r+1)|q| < R0``, with a
super-exponential decay budget ``sum_q |v[r, q]| < exp(-2**(eta*r))``.  The
quasi-periodic class is a finite trigonometric sum over the frequency
module generated by 1 and an irrational alpha.  Both evaluate by literal
summation of their modes; both are immutable and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, isfinite
from typing import Mapping, Sequence

import mpmath
import numpy as np

from .numbers import Alpha, as_alpha

IntPair = tuple[int, int]
Int4 = tuple[int, int, int, int]


class BoxError(ValueError):
    """Sampling box incommensurate with the potential's periods."""


class ResolutionError(ValueError):
    """Grid too coarse for the retained frequencies."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicLayer:
    """One periodic layer: index r, coefficient table, base periods (d1, d2)."""

    index: int
    coefficients: Mapping[IntPair, complex]
    base_periods: tuple[float, float]

    @property
    def periods(self) -> tuple[float, float]:
        s = 2.0 ** (self.index - 1)
        return (s * self.base_periods[0], s * self.base_periods[1])

    def frequency(self, q: IntPair) -> np.ndarray:
        """Angular frequency vector of mode q: 2*pi*q / periods."""
        p1, p2 = self.periods
        return np.array([2.0 * np.pi * q[0] / p1, 2.0 * np.pi * q[1] / p2])

    def coefficient_sum(self) -> float:
        return float(sum(abs(v) for v in self.coefficients.values()))


@dataclass(frozen=True)
class LimitPeriodicPotential:
    """Ordered layers with shared bandwidth R0, decay rate eta, schedule M_n."""

    layers: tuple[PeriodicLayer, ...]
    R0: float
    eta: float
    schedule: tuple[int, ...] = ()
    coupling: float = 1.0

    def __post_init__(self):
        if not self.schedule:
            object.__setattr__(self, "schedule", tuple(range(1, len(self.layers) + 1)))

    @property
    def depth(self) -> int:
        return len(self.schedule)

    def period_at(self, n: int) -> tuple[float, float]:
        """Periods of the n-th approximant, i.e. of the deepest kept layer."""
        m = self.schedule[n - 1]
        d1, d2 = self.layers[0].base_periods if self.layers else (1.0, 1.0)
        s = 2.0 ** (m - 1)
        return (s * d1, s * d2)

    def modes(self) -> dict[IntPair, complex]:
        """Coefficients on the dual lattice of the finest kept layer.

        Layer r's mode q sits at integer label q * 2**(M-r) of the lattice
        with spacing 2*pi/(2**(M-1)*d); colliding labels accumulate.
        """
        if not self.layers:
            return {}
        m_top = self.layers[-1].index
        out: dict[IntPair, complex] = {}
        for layer in self.layers:
            shift = 2 ** (m_top - layer.index)
            for q, v in layer.coefficients.items():
                key = (q[0] * shift, q[1] * shift)
                out[key] = out.get(key, 0.0) + complex(v) * self.coupling
        return out


@dataclass(frozen=True)
class QuasiPeriodicPotential:
    """Finite sum of modes at frequencies 2*pi*(s1 + alpha*s2), s1, s2 in Z^2.

    Mode keys are the 4-integer tuple (s1x, s1y, s2x, s2y).  Realness
    (conjugate symmetry) and distinctness of the physical frequencies are
    enforced at construction; distinctness is decided in exact arithmetic.
    """

    alpha: Alpha
    modes: Mapping[Int4, complex]
    coupling: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_alpha(self.alpha))
        seen: dict[Int4, Int4] = {}
        for key, val in self.modes.items():
            s1x, s1y, s2x, s2y = key
            if (s1x, s1y, s2x, s2y) == (0, 0, 0, 0):
                raise ValueError("zero frequency mode not allowed (zero mean)")
            neg = (-s1x, -s1y, -s2x, -s2y)
            if neg not in self.modes:
                raise ValueError(f"mode {key} lacks its conjugate partner")
            if abs(self.modes[neg] - complex(val).conjugate()) > 1e-12:
                raise ValueError(f"mode {key} breaks conjugate symmetry")
            seen[key] = key
        keys = list(self.modes.keys())
        for i in range(len(keys)):
            for j in range(i + 1, len(keys)):
                a, b = keys[i], keys[j]
                # same physical frequency iff both components agree exactly
                dx = (a[0] - b[0], a[2] - b[2])
                dy = (a[1] - b[1], a[3] - b[3])
                zx = self.alpha.combo(dx[0], dx[1], 0).is_zero
                zy = self.alpha.combo(dy[0], dy[1], 0).is_zero
                if zx and zy:
                    raise ValueError(f"modes {a} and {b} share a physical frequency")

    def frequency(self, key: Int4) -> np.ndarray:
        a = self.alpha.value
        return 2.0 * np.pi * np.array([key[0] + a * key[2], key[1] + a * key[3]])

    def frequency_set(self) -> list[Int4]:
        return list(self.modes.keys())


@dataclass(frozen=True)
class PotentialField:
    """Real samples of a potential on a uniform box grid."""

    samples: np.ndarray
    box: tuple[float, float]
    resolution: tuple[int, int]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    layer: int | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_limit_periodic(p: LimitPeriodicPotential) -> ValidationReport:
    """Check every structural invariant; never raises, reports everything."""
    out: list[Violation] = []
    for pos, layer in enumerate(p.layers, start=1):
        if layer.index != pos:
            out.append(Violation("layer order", layer.index, f"expected index {pos}"))
        total = 0.0
        for q, v in layer.coefficients.items():
            vc = complex(v)
            if not (isfinite(vc.real) and isfinite(vc.imag)):
                out.append(Violation("non-finite", layer.index, f"coefficient at {q}"))
                continue
            if q == (0, 0):
                out.append(Violation("zero mean", layer.index, "coefficient at q=(0,0)"))
            neg = (-q[0], -q[1])
            if neg not in layer.coefficients:
                out.append(Violation("realness", layer.index, f"missing conjugate of {q}"))
            elif abs(complex(layer.coefficients[neg]) - vc.conjugate()) > 1e-14:
                out.append(Violation("realness", layer.index, f"conjugate mismatch at {q}"))
            scaled = 2.0 ** (-layer.index + 1) * float(np.hypot(q[0], q[1]))
            if scaled >= p.R0:
                out.append(
                    Violation("bandwidth", layer.index, f"2^(-r+1)|q|={scaled:.6g} >= R0 at {q}")
                )
            total += abs(vc)
        budget = exp(-(2.0 ** (p.eta * layer.index)))
        if total >= budget:
            out.append(
                Violation("decay budget", layer.index, f"sum|v|={total:.6g} >= {budget:.6g}")
            )
    if not (p.eta > 0):
        out.append(Violation("decay budget", None, "eta must be positive"))
    if not (p.R0 > 0):
        out.append(Violation("bandwidth", None, "R0 must be positive"))
    prev = 0
    for n, m in enumerate(p.schedule, start=1):
        if m <= prev:
            out.append(Violation("schedule", None, f"M_{n}={m} not strictly increasing"))
        if m > len(p.layers):
            out.append(Violation("schedule", None, f"M_{n}={m} exceeds layer count"))
        prev = m
    return ValidationReport(tuple(out))


def truncate(p: LimitPeriodicPotential, n: int) -> LimitPeriodicPotential:
    """Potential of the n-th approximant: layers 1..M_n."""
    if not (1 <= n <= len(p.schedule)):
        raise IndexError(f"approximant level {n} outside schedule of length {len(p.schedule)}")
    m = p.schedule[n - 1]
    return LimitPeriodicPotential(
        layers=p.layers[:m], R0=p.R0, eta=p.eta, schedule=p.schedule[:n], coupling=p.coupling
    )


# ---------------------------------------------------------------------------
# Diophantine conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class A1Violation:
    triple: tuple[int, int, int]
    value: float
    threshold: float


@dataclass(frozen=True)
class A1Report:
    violations: tuple[A1Violation, ...]
    zeros: tuple[tuple[int, int, int], ...]
    degenerate: bool  # rational input with in-window denominator
    note: str = ""

    @property
    def ok(self) -> bool:
        return not self.violations


def check_A1(
    alpha,
    N0: float,
    N1: int,
    search_bound: int,
    zero_branch: bool = True,
) -> A1Report:
    """Search integer triples for small nonzero values of n1 + a*n2 + a^2*n3.

    Scans the full window N1 < |n1|+|n2|+|n3| <= search_bound.  Any triple
    with |value| below (|n1|+|n2|+|n3|)**(-N0) is a violation unless the
    value is exactly zero (decided in integer arithmetic), which the
    condition's zero branch allows.  Exhaustiveness: a violating or zero
    triple has |value| < 1/2, which pins n1 to -round(a*n2 + a^2*n3),
    so scanning all (n2, n3) pairs covers the whole window.  Candidates are
    screened in floats with a wide safety margin, then re-judged at high
    precision.
    """
    a = as_alpha(alpha)
    if not isfinite(a.value):
        raise ValueError("non-finite alpha")
    if search_bound < N1:
        raise ValueError("search_bound must be at least N1")

    af = a.value
    b = int(search_bound)
    violations: list[A1Violation] = []
    zeros: list[tuple[int, int, int]] = []

    n3_vals = np.arange(-b, b + 1)
    n2_vals = np.arange(-b, b + 1)
    # float screen tolerance: exact comparison happens only for survivors
    screen = max((N1 + 1) ** (-N0), 1e-30) + 1e-9 * (1.0 + b * 4e-16)
    for n3 in n3_vals:
        rem = b - abs(int(n3))
        if rem < 0:
            continue
        n2s = n2_vals[np.abs(n2_vals) <= rem]
        y = af * n2s + (af * af) * int(n3)
        n1s = -np.rint(y).astype(np.int64)
        resid = np.abs(y + n1s)
        sigma = np.abs(n1s) + np.abs(n2s) + abs(int(n3))
        cand = (resid <= screen) & (sigma > N1) & (sigma <= b)
        for idx in np.nonzero(cand)[0]:
            n1, n2 = int(n1s[idx]), int(n2s[idx])
            tv = a.combo(n1, n2, int(n3))
            s = abs(n1) + abs(n2) + abs(int(n3))
            if tv.is_zero:
                zeros.append((n1, n2, int(n3)))
                if zero_branch:
                    continue
                violations.append(A1Violation((n1, n2, int(n3)), 0.0, float(s) ** (-N0)))
                continue
            with mpmath.workdps(50):
                thr = mpmath.mpf(s) ** (-N0)
                if tv.magnitude <= thr:
                    violations.append(
                        A1Violation((n1, n2, int(n3)), float(tv.magnitude), float(thr))
                    )

    degenerate = False
    note = ""
    if a.is_rational and a.den <= 3 * b:
        degenerate = True
        note = f"rational input with denominator {a.den} inside the window"
    violations.sort(key=lambda v: v.triple)
    zeros.sort()
    return A1Report(tuple(violations), tuple(zeros), degenerate, note)


@dataclass(frozen=True)
class A2Violation:
    first: Int4
    second: Int4
    detail: str


@dataclass(frozen=True)
class A2Report:
    violations: tuple[A2Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_A2(S: Sequence[Int4], alpha) -> A2Report:
    """Colinear pairs in the frequency set must have rational ratio.

    Vectors are u = s1 + alpha*s2 given by integer data (s1x, s1y, s2x, s2y).
    Colinearity of u, v is the exact vanishing of the cross product, a
    quadratic integer combination of (1, alpha, alpha^2).  Given colinear
    u = c*v, c is rational iff the 2x4 integer matrix [s1 s2; r1 r2] has
    rank one over Q, an exact minor test.
    """
    a = as_alpha(alpha)
    vecs = list(S)
    if not vecs:
        raise ValueError("empty frequency set")
    for key in vecs:
        if key == (0, 0, 0, 0):
            raise ValueError("zero vector in frequency set")
        neg = (-key[0], -key[1], -key[2], -key[3])
        if neg not in vecs:
            raise ValueError(f"frequency set not symmetric: missing -{key}")

    def cross_is_zero(u: Int4, v: Int4) -> bool:
        s1, s2 = (u[0], u[1]), (u[2], u[3])
        r1, r2 = (v[0], v[1]), (v[2], v[3])
        c0 = s1[0] * r1[1] - s1[1] * r1[0]
        c1 = s1[0] * r2[1] - s1[1] * r2[0] + s2[0] * r1[1] - s2[1] * r1[0]
        c2 = s2[0] * r2[1] - s2[1] * r2[0]
        return a.combo(c0, c1, c2).is_zero

    def ratio_rational(u: Int4, v: Int4) -> bool:
        mat = [(u[0], u[1], u[2], u[3]), (v[0], v[1], v[2], v[3])]
        for i in range(4):
            for j in range(i + 1, 4):
                if mat[0][i] * mat[1][j] - mat[0][j] * mat[1][i] != 0:
                    return False
        return True

    bad: list[A2Violation] = []
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            u, v = vecs[i], vecs[j]
            if cross_is_zero(u, v):
                if not ratio_rational(u, v):
                    bad.append(A2Violation(u, v, "colinear with irrational ratio"))
    return A2Report(tuple(bad))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _grid(box: tuple[float, float], resolution: tuple[int, int]):
    n1, n2 = resolution
    x = np.arange(n1) * (box[0] / n1)
    y = np.arange(n2) * (box[1] / n2)
    return x, y


def _mode_list(p) -> list[tuple[np.ndarray, complex]]:
    if isinstance(p, LimitPeriodicPotential):
        if not p.layers:
            return []
        d1, d2 = p.layers[0].base_periods
        m_top = p.layers[-1].index
        pd = (2.0 ** (m_top - 1) * d1, 2.0 ** (m_top - 1) * d2)
        return [
            (2.0 * np.pi * np.array([k[0] / pd[0], k[1] / pd[1]]), v)
            for k, v in p.modes().items()
        ]
    if isinstance(p, QuasiPeriodicPotential):
        return [(p.frequency(k), complex(v) * p.coupling) for k, v in p.modes.items()]
    raise TypeError(f"cannot sample {type(p)!r}")


def sample_potential(p, box: tuple[float, float], resolution: tuple[int, int]) -> PotentialField:
    """Evaluate the literal trigonometric sum on a uniform box grid.

    The limit-periodic case requires the box to be a whole number of the
    finest kept period in each direction; every retained frequency must sit
    below the grid Nyquist frequency along both axes.
    """
    if isinstance(p, LimitPeriodicPotential) and p.layers:
        d1, d2 = p.layers[0].base_periods
        m_top = p.layers[-1].index
        for side, period, name in (
            (box[0], 2.0 ** (m_top - 1) * d1, "L1"),
            (box[1], 2.0 ** (m_top - 1) * d2, "L2"),
        ):
            ratio = side / period
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise BoxError(
                    f"{name}={side} is not a whole number of the period {period}"
                )

    modes = _mode_list(p)
    nyq = (np.pi * resolution[0] / box[0], np.pi * resolution[1] / box[1])
    for freq, _ in modes:
        if abs(freq[0]) >= nyq[0] or abs(freq[1]) >= nyq[1]:
            raise ResolutionError(
                f"frequency {tuple(freq)} at or above grid Nyquist {nyq}"
            )

    x, y = _grid(box, resolution)
    acc = np.zeros(resolution, dtype=complex)
    for freq, v in modes:
        acc += v * np.exp(1j * freq[0] * x)[:, None] * np.exp(1j * freq[1] * y)[None, :]
    total = sum(abs(v) for _, v in modes)
    resid = float(np.max(np.abs(acc.imag))) if modes else 0.0
    if total > 0 and resid > 1e-12 * total:
        raise ArithmeticError(f"imaginary residue {resid:.3e} exceeds realness budget")
    return PotentialField(samples=acc.real.copy(), box=box, resolution=resolution)


def tail_bound(p: LimitPeriodicPotential, n: int) -> float:
    """sup-norm bound on V - V_truncated: the dropped layers' coefficient mass."""
    m = p.schedule[n - 1]
    return p.coupling * sum(layer.coefficient_sum() for layer in p.layers[m:])
