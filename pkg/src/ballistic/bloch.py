"""Plane-wave dispersion branch of the periodic approximants.

For quasimomentum k the approximant Hamiltonian restricted to plane waves
exp(i<k+p_r, x>) is a Hermitian matrix with kinetic diagonal |k+p_r|^2 and
off-diagonal entries given by the potential's Fourier coefficients at the
lattice difference p_r - p_r'.  The quasi-plane-wave branch is the
eigenvector dominated by the r=0 component; its eigenvalue stays near
|k|^2 away from Bragg resonances.  Two independent routes compute it: a
dense Hermitian diagonalization (the oracle) and a fixed-point iteration of
the banded coefficient relation

    C_r = (lam - |k+p_r|^2)^(-1) * sum_r' W_{r-r'} C_r'     (r != 0, C_0 = 1)

with a Rayleigh-quotient eigenvalue update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .potentials import LimitPeriodicPotential, QuasiPeriodicPotential, truncate

DENSE_LIMIT = 4096


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class DualLattice:
    """Finite piece of the dual lattice (or frequency module), |p| <= cutoff.

    labels are exact integer tuples; points/labels share indexing and the
    zero vector sits at index 0.  Closed under negation by construction.
    """

    points: np.ndarray
    labels: tuple[tuple[int, ...], ...]
    cutoff: float

    def __post_init__(self):
        if len(self.labels) == 0:
            raise LatticeError("empty dual lattice")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index_of(self) -> dict[tuple[int, ...], int]:
        return {lab: i for i, lab in enumerate(self.labels)}


def _lp_lattice(potential: LimitPeriodicPotential, n: int, K: float) -> tuple[DualLattice, dict]:
    trunc = truncate(potential, n)
    d1, d2 = trunc.period_at(n)
    b1, b2 = 2.0 * np.pi / d1, 2.0 * np.pi / d2
    m1max = int(np.floor(K / b1))
    m2max = int(np.floor(K / b2))
    labels = [(0, 0)]
    for m1 in range(-m1max, m1max + 1):
        for m2 in range(-m2max, m2max + 1):
            if (m1, m2) == (0, 0):
                continue
            if np.hypot(m1 * b1, m2 * b2) <= K:
                labels.append((m1, m2))
    pts = np.array([[m1 * b1, m2 * b2] for m1, m2 in labels])
    return DualLattice(pts, tuple(labels), K), trunc.modes()


def _qp_lattice(
    potential: QuasiPeriodicPotential, K: float, hops: int
) -> tuple[DualLattice, dict]:
    a = potential.alpha.value
    offsets = {k: complex(v) * potential.coupling for k, v in potential.modes.items()}

    def point(lab):
        return 2.0 * np.pi * np.array([lab[0] + a * lab[2], lab[1] + a * lab[3]])

    frontier = {(0, 0, 0, 0)}
    seen = {(0, 0, 0, 0)}
    for _ in range(hops):
        nxt = set()
        for lab in frontier:
            for off in offsets:
                cand = tuple(lab[i] + off[i] for i in range(4))
                if cand not in seen and float(np.linalg.norm(point(cand))) <= K:
                    nxt.add(cand)
                    seen.add(cand)
        frontier = nxt
    labels = [(0, 0, 0, 0)] + sorted(seen - {(0, 0, 0, 0)})
    pts = np.array([point(lab) for lab in labels])
    return DualLattice(pts, tuple(labels), K), offsets


@dataclass(frozen=True)
class BlochContext:
    """Cached per-(potential, level, cutoff) assembly: only the diagonal moves with k."""

    lattice: DualLattice
    offdiag: np.ndarray
    mode_offsets: dict
    level: int
    coupling: float

    def matrix(self, k: np.ndarray) -> np.ndarray:
        diag = np.sum((self.lattice.points + np.asarray(k)[None, :]) ** 2, axis=1)
        m = self.offdiag.copy()
        m[np.diag_indices_from(m)] = diag
        return m

    def resonance_gap(self, k) -> float:
        k = np.asarray(k, dtype=float)
        shifted = np.sum((self.lattice.points + k[None, :]) ** 2, axis=1)
        if self.lattice.size < 2:
            return np.inf
        return float(np.min(np.abs(shifted[1:] - shifted[0])))


def bloch_context(potential, n: int, K: float, hops: int = 3) -> BlochContext:
    """Build the cached plane-wave assembly for one approximant level."""
    if isinstance(potential, LimitPeriodicPotential):
        lattice, offsets = _lp_lattice(potential, n, K)
        coupling = potential.coupling
    elif isinstance(potential, QuasiPeriodicPotential):
        lattice, offsets = _qp_lattice(potential, K, hops)
        coupling = potential.coupling
    else:
        raise TypeError(f"cannot assemble for {type(potential)!r}")

    for off, v in offsets.items():
        neg = tuple(-c for c in off)
        if neg not in offsets or abs(offsets[neg] - complex(v).conjugate()) > 1e-14:
            raise ValueError(f"non-Hermitian coefficient input at offset {off}")

    size = lattice.size
    m = np.zeros((size, size), dtype=complex)
    index = lattice.index_of()
    dim = len(lattice.labels[0])
    for i, lab_i in enumerate(lattice.labels):
        for off, v in offsets.items():
            lab_j = tuple(lab_i[d] - off[d] for d in range(dim))
            j = index.get(lab_j)
            if j is not None:
                m[i, j] += v
    herm = np.max(np.abs(m - m.conj().T))
    if herm > 1e-12:
        raise ValueError(f"assembled matrix not Hermitian: residual {herm:.3e}")
    return BlochContext(lattice, m, offsets, n, coupling)


@dataclass(frozen=True)
class BlochMatrix:
    k: np.ndarray
    entries: np.ndarray
    lattice: DualLattice


def assemble_bloch_matrix(potential, n: int, k, K: float) -> BlochMatrix:
    ctx = bloch_context(potential, n, K)
    k = np.asarray(k, dtype=float)
    return BlochMatrix(k=k, entries=ctx.matrix(k), lattice=ctx.lattice)


def solve_dense(m: BlochMatrix | np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Full Hermitian spectral decomposition, eigenvalues ascending."""
    entries = m.entries if isinstance(m, BlochMatrix) else np.asarray(m)
    if entries.shape[0] > DENSE_LIMIT:
        raise ValueError(
            f"dimension {entries.shape[0]} over dense limit {DENSE_LIMIT};"
            " use the recursive path"
        )
    vals, vecs = np.linalg.eigh(entries)
    scale = float(np.linalg.norm(entries, ord=2)) if entries.size else 0.0
    for i in range(len(vals)):
        resid = float(np.linalg.norm(entries @ vecs[:, i] - vals[i] * vecs[:, i]))
        if scale > 0 and resid > 1e-10 * scale:
            raise ArithmeticError(f"eigenpair residual {resid:.3e} too large")
    return [(float(vals[i]), vecs[:, i]) for i in range(len(vals))]


# ---------------------------------------------------------------------------
# branch selection and derived quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResonantFlag:
    k: tuple[float, float]
    best_weight: float
    reason: str = "plane-wave weight below threshold"


@dataclass(frozen=True)
class NonConvergent:
    k: tuple[float, float]
    reason: str


@dataclass(frozen=True, eq=False)
class DispersionPoint:
    """One quasimomentum on the plane-wave branch.

    coefficients is the unit eigenvector in lattice indexing with the r=0
    phase gauged real positive; rel_coefficients rescales to C_0 = 1 as in
    the coefficient recursion.
    """

    k: np.ndarray
    lam: float
    coefficients: np.ndarray
    lattice: DualLattice
    weight: float
    gap: float
    grad: np.ndarray

    @property
    def rel_coefficients(self) -> np.ndarray:
        c0 = self.coefficients[0]
        if c0 == 0:
            raise ZeroDivisionError("vanishing plane-wave component")
        return self.coefficients / c0


def _gauge(vec: np.ndarray) -> np.ndarray:
    v = vec / np.linalg.norm(vec)
    c0 = v[0]
    if c0 != 0:
        v = v * (abs(c0) / c0)
    return v


def grad_lambda(lam_vec: np.ndarray, k: np.ndarray, lattice: DualLattice) -> np.ndarray:
    """Hellmann-Feynman gradient: only the diagonal depends on k."""
    nrm = float(np.linalg.norm(lam_vec))
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"eigenvector not normalized: |v| = {nrm}")
    w = np.abs(lam_vec) ** 2
    return 2.0 * np.sum((lattice.points + np.asarray(k)[None, :]) * w[:, None], axis=0)


def select_plane_wave_branch(
    pairs: Iterable[tuple[float, np.ndarray]],
    k,
    lattice: DualLattice,
    threshold: float = 0.9,
    gap: float | None = None,
) -> DispersionPoint | ResonantFlag:
    """Pick the eigenpair with dominant r=0 weight; flag resonant k."""
    k = np.asarray(k, dtype=float)
    best = max(pairs, key=lambda p: abs(p[1][0]) ** 2)
    vec = _gauge(best[1])
    weight = float(abs(vec[0]) ** 2)
    if weight < threshold:
        return ResonantFlag(k=(float(k[0]), float(k[1])), best_weight=weight)
    if gap is None:
        shifted = np.sum((lattice.points + k[None, :]) ** 2, axis=1)
        gap = float(np.min(np.abs(shifted[1:] - shifted[0]))) if lattice.size > 1 else np.inf
    return DispersionPoint(
        k=k,
        lam=float(best[0]),
        coefficients=vec,
        lattice=lattice,
        weight=weight,
        gap=gap,
        grad=grad_lambda(vec, k, lattice),
    )


def solve_branch(ctx: BlochContext, k, threshold: float = 0.9):
    """Dense solve + branch selection at one quasimomentum."""
    k = np.asarray(k, dtype=float)
    pairs = solve_dense(BlochMatrix(k=k, entries=ctx.matrix(k), lattice=ctx.lattice))
    return select_plane_wave_branch(pairs, k, ctx.lattice, threshold, gap=ctx.resonance_gap(k))


def _active_set(ctx: BlochContext, hops: int) -> np.ndarray:
    """Indices reachable from r=0 within `hops` potential-bandwidth steps."""
    index = ctx.lattice.index_of()
    dim = len(ctx.lattice.labels[0])
    reached = {0}
    frontier = {ctx.lattice.labels[0]}
    for _ in range(hops):
        nxt = set()
        for lab in frontier:
            for off in ctx.mode_offsets:
                cand = tuple(lab[d] + off[d] for d in range(dim))
                j = index.get(cand)
                if j is not None and j not in reached:
                    reached.add(j)
                    nxt.add(cand)
        frontier = nxt
    return np.array(sorted(reached), dtype=int)


def solve_recursive(
    ctx: BlochContext,
    k,
    max_iter: int = 200,
    tol: float = 1e-12,
    threshold: float = 0.9,
    hops: int = 4,
    blowup: float = 10.0,
) -> DispersionPoint | NonConvergent:
    """Fixed-point iteration of the coefficient relation with C_0 = 1.

    Divergence of the l1 norm, a vanishing denominator, or running out of
    iterations all signal a resonant quasimomentum.
    """
    k = np.asarray(k, dtype=float)
    active = _active_set(ctx, hops)
    sub = ctx.matrix(k)[np.ix_(active, active)]
    diag = np.real(np.diag(sub)).copy()
    off = sub.copy()
    off[np.diag_indices_from(off)] = 0.0
    kk = float(diag[0])  # |k|^2; active[0] == 0 by construction

    c = np.zeros(len(active), dtype=complex)
    c[0] = 1.0
    lam = kk
    kt = (float(k[0]), float(k[1]))
    for _ in range(max_iter):
        denom = lam - diag
        denom[0] = 1.0  # C_0 pinned
        if np.min(np.abs(denom[1:] if len(denom) > 1 else [1.0])) < 1e-9 * max(1.0, abs(lam)):
            return NonConvergent(kt, "vanishing denominator (resonant)")
        rhs = off @ c
        c_new = rhs / denom
        c_new[0] = 1.0
        if not np.all(np.isfinite(c_new)):
            return NonConvergent(kt, "non-finite iterate")
        l1 = float(np.sum(np.abs(c_new)))
        if l1 > blowup:
            return NonConvergent(kt, f"l1 norm {l1:.3g} exceeded bound")
        lam_new = float(np.real(np.vdot(c_new, sub @ c_new) / np.vdot(c_new, c_new)))
        dc = float(np.sum(np.abs(c_new - c)))
        dl = abs(lam_new - lam)
        c, lam = c_new, lam_new
        if dl < tol and dc < tol:
            break
    else:
        return NonConvergent(kt, "max_iter reached")

    full = np.zeros(ctx.lattice.size, dtype=complex)
    full[active] = c
    vec = _gauge(full)
    weight = float(abs(vec[0]) ** 2)
    if weight < threshold:
        return NonConvergent(kt, f"converged to weight {weight:.3g} below threshold")
    return DispersionPoint(
        k=k,
        lam=lam,
        coefficients=vec,
        lattice=ctx.lattice,
        weight=weight,
        gap=ctx.resonance_gap(k),
        grad=grad_lambda(vec, k, ctx.lattice),
    )


def grad_lambda_fd(ctx: BlochContext, k, h: float | None = None) -> np.ndarray:
    """Central-difference gradient of the branch eigenvalue.

    Step rule: h = eps**(1/3) * max(1, |k|), the usual sweet spot between
    truncation and roundoff for a second-order stencil.
    """
    k = np.asarray(k, dtype=float)
    if h is None:
        h = float(np.finfo(float).eps ** (1.0 / 3.0) * max(1.0, np.linalg.norm(k)))
    out = np.zeros(2)
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = h
        plus = solve_branch(ctx, k + e, threshold=0.0)
        minus = solve_branch(ctx, k - e, threshold=0.0)
        out[axis] = (plus.lam - minus.lam) / (2.0 * h)
    return out


# ---------------------------------------------------------------------------
# coefficient decay diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayReport:
    k_norm: float
    total_abs: float  # sum |C_r| in the C_0 = 1 normalization
    inner_abs: float  # sum over |k + p_r| < |k|/4


def coefficient_decay_profile(point: DispersionPoint) -> DecayReport:
    rel = point.rel_coefficients
    kn = float(np.linalg.norm(point.k))
    shifted = np.linalg.norm(point.lattice.points + point.k[None, :], axis=1)
    inner = shifted < kn / 4.0
    return DecayReport(
        k_norm=kn,
        total_abs=float(np.sum(np.abs(rel))),
        inner_abs=float(np.sum(np.abs(rel[inner]))),
    )


def fit_decay_power(reports: list[DecayReport]) -> float:
    """Fitted alpha in inner_abs ~ |k|**(-alpha) across magnitudes."""
    ks = np.array([r.k_norm for r in reports])
    vals = np.array([max(r.inner_abs, 1e-300) for r in reports])
    if np.all(vals <= 1e-290):
        return np.inf
    slope = np.polyfit(np.log(ks), np.log(vals), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# branch sweeps over a rectangle of quasimomenta
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DispersionBranch:
    """Branch data on a rectangular k grid; resonant cells carry NaN lambda."""

    kx: np.ndarray
    ky: np.ndarray
    lam: np.ndarray
    grad: np.ndarray  # (nx, ny, 2)
    weight: np.ndarray
    gap: np.ndarray
    resonant: np.ndarray  # bool
    points: dict  # (i, j) -> DispersionPoint for non-resonant cells
    level: int
    cutoff: float
    coupling: float

    def continuity_defect(self) -> float:
        """Largest lambda jump between adjacent non-resonant cells."""
        worst = 0.0
        ok = ~self.resonant
        for axis in (0, 1):
            sl_a = (slice(None, -1), slice(None)) if axis == 0 else (slice(None), slice(None, -1))
            sl_b = (slice(1, None), slice(None)) if axis == 0 else (slice(None), slice(1, None))
            both = ok[sl_a] & ok[sl_b]
            if np.any(both):
                jump = np.abs(self.lam[sl_a] - self.lam[sl_b])[both]
                worst = max(worst, float(np.max(jump)))
        return worst


def sweep_branch(
    ctx: BlochContext,
    kx_centers: np.ndarray,
    ky_centers: np.ndarray,
    threshold: float = 0.9,
    workers: int = 1,
) -> DispersionBranch:
    nx, ny = len(kx_centers), len(ky_centers)
    lam = np.full((nx, ny), np.nan)
    grad = np.zeros((nx, ny, 2))
    weight = np.zeros((nx, ny))
    gap = np.zeros((nx, ny))
    res = np.ones((nx, ny), dtype=bool)
    pts: dict = {}

    def solve_row(i: int):
        return [solve_branch(ctx, (kx_centers[i], ky), threshold) for ky in ky_centers]

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(solve_row, range(nx)))
    else:
        rows = [solve_row(i) for i in range(nx)]

    for i in range(nx):
        for j, got in enumerate(rows[i]):
            if isinstance(got, ResonantFlag):
                weight[i, j] = got.best_weight
                gap[i, j] = ctx.resonance_gap((kx_centers[i], ky_centers[j]))
                continue
            res[i, j] = False
            lam[i, j] = got.lam
            grad[i, j] = got.grad
            weight[i, j] = got.weight
            gap[i, j] = got.gap
            pts[(i, j)] = got
    return DispersionBranch(
        kx=np.asarray(kx_centers),
        ky=np.asarray(ky_centers),
        lam=lam,
        grad=grad,
        weight=weight,
        gap=gap,
        resonant=res,
        points=pts,
        level=ctx.level,
        cutoff=ctx.lattice.cutoff,
        coupling=ctx.coupling,
    )
