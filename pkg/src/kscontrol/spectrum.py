"""Eigendata for the fourth-order operator on (0,a) x Omega_y.

All other modules pull their rates from here.  Conventions:

* x-eigenfunctions are L2-orthonormal, ``psi_k(x) = sqrt(2/a) sin(k pi x / a)``,
  and likewise for box cross-sections in y.  (The common sqrt(2) convention is
  orthonormal only on unit intervals; duality identities in the tests close
  exactly because of this choice.)
* ``x_eigenvalue(k, spec, j) = -k^4 pi^4/a^4 + (nu - 2 mu_j) k^2 pi^2/a^2`` is
  the rate of the 1-D problem whose second-order coefficient is shifted by the
  j-th cross-section eigenvalue.
* ``mode_rate(spec, k, j).total`` adds the zeroth-order shift
  ``-(mu_j^2 - nu mu_j)`` and equals ``-(kappa+mu_j)^2 + nu (kappa+mu_j)``
  with ``kappa = k^2 pi^2 / a^2``: the full cylinder rate of mode (k, j).

The critical set is ``{2 mu_j + pi^2 (k^2+l^2)/a^2 : k != l}``; membership is
decided exactly in Q + Q*pi^2 whenever the inputs allow it, otherwise within
``crit_tol``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DuplicateRate,
    IndexOutOfRange,
    ThresholdBeyondTruncation,
)
from .exact import ExactLength, ExactScalar, parse_length, parse_rational

DEFAULT_K_X = 32
DEFAULT_J_Y = 64
DEFAULT_CRIT_TOL = 1e-9


# ---------------------------------------------------------------------------
# cross sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Rectangular cross-section with Dirichlet Laplacian spectrum.

    ``dims`` are side lengths; eigenvalues are sums (m_i pi / b_i)^2 over
    integer tuples m_i >= 1, enumerated with multiplicity.
    """

    dims: tuple = ()

    def __init__(self, dims: Sequence):
        object.__setattr__(self, "dims", tuple(dims))
        if not self.dims:
            raise ValueError("Box needs at least one dimension")
        for b in self.dims:
            if float(b if isinstance(b, (int, float)) else _dim_float(b)) <= 0:
                raise ValueError("box dimensions must be positive")


@dataclass(frozen=True)
class External:
    """User-supplied cross-section eigenvalues, ascending and positive."""

    mus: tuple = ()

    def __init__(self, mus: Sequence[float]):
        vals = tuple(float(m) for m in mus)
        if not vals:
            raise ValueError("External needs at least one eigenvalue")
        if vals[0] <= 0:
            raise ValueError("cross-section eigenvalues must be positive")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("cross-section eigenvalues must be nondecreasing")
        object.__setattr__(self, "mus", vals)


def _dim_float(b) -> float:
    exact = parse_length(b)
    return float(exact) if exact is not None else float(b)


def load_external_eigenvalues(path) -> External:
    """Read one positive decimal per line; ``#`` starts a comment."""
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            vals.append(float(line))
    return External(vals)


def y_eigenvalues_box(dims: Sequence, count: int):
    """First ``count`` Dirichlet eigenvalues of a box, with index tuples.

    Returns ``(mus, tuples)`` sorted ascending, ties kept with multiplicity
    and broken by the index tuple for determinism.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    bvals = [_dim_float(b) for b in dims]
    if any(b <= 0 for b in bvals):
        raise ValueError("box dimensions must be positive")
    d = len(bvals)
    # Any tuple with some m_i > cap has mu > (cap*pi/max_b)^2 >= the count-th
    # value along the shortest axis, so the cap below is exhaustive.
    cap = max(2, int(math.ceil(count * max(bvals) / min(bvals))) + 1)
    heap = []
    for tup in itertools.product(range(1, cap + 1), repeat=d):
        mu = sum((m * math.pi / b) ** 2 for m, b in zip(tup, bvals))
        heapq.heappush(heap, (mu, tup))
    out_mu, out_tup = [], []
    for _ in range(count):
        mu, tup = heapq.heappop(heap)
        out_mu.append(mu)
        out_tup.append(tup)
    return out_mu, out_tup


def _y_eigenvalues_box_exact(dims: Sequence, count: int):
    """Exact (Q + Q*pi^2) box eigenvalues, or None when a dim is inexact."""
    exact_dims = [parse_length(b) for b in dims]
    if any(e is None for e in exact_dims):
        return None
    d = len(exact_dims)
    fvals = [float(e) for e in exact_dims]
    cap = max(2, int(math.ceil(count * max(fvals) / min(fvals))) + 1)
    entries = []
    for tup in itertools.product(range(1, cap + 1), repeat=d):
        ex = ExactScalar()
        for m, b in zip(tup, exact_dims):
            ex = ex + b.pi_over_length_squared().scale(Fraction(m * m))
        entries.append((float(ex), tup, ex))
    entries.sort(key=lambda e: (e[0], e[1]))
    return [e[2] for e in entries[:count]]


# ---------------------------------------------------------------------------
# the spectrum specification
# ---------------------------------------------------------------------------

@dataclass
class SpectrumSpec:
    """Domain geometry, damping parameter, and truncation orders.

    Owns all eigendata: cross-section eigenvalues (floats plus exact values
    when derivable), the x-truncation ``K_x`` and y-truncation ``J_y``, and
    the critical-set proximity tolerance.
    """

    a: object
    nu: object
    cross_section: object
    K_x: int = DEFAULT_K_X
    J_y: int = DEFAULT_J_Y
    crit_tol: float = DEFAULT_CRIT_TOL

    a_float: float = field(init=False)
    nu_float: float = field(init=False)
    mus: np.ndarray = field(init=False)
    mu_tuples: Optional[list] = field(init=False, default=None)

    _a_exact: Optional[ExactLength] = field(init=False, default=None)
    _nu_exact: Optional[Fraction] = field(init=False, default=None)
    _mu_exact: Optional[list] = field(init=False, default=None)

    def __post_init__(self):
        if self.K_x < 1 or self.J_y < 1:
            raise ValueError("truncation orders must be >= 1")
        if self.crit_tol <= 0:
            raise ValueError("crit_tol must be positive")
        self._a_exact = parse_length(self.a)
        self.a_float = float(self._a_exact) if self._a_exact is not None else float(self.a)
        if self.a_float <= 0:
            raise ValueError("a must be positive")
        if isinstance(self.nu, float):
            self.nu_float = self.nu
            self._nu_exact = None
        else:
            self._nu_exact = parse_rational(self.nu)
            self.nu_float = float(self._nu_exact)

        if isinstance(self.cross_section, Box):
            mus, tuples = y_eigenvalues_box(self.cross_section.dims, self.J_y)
            self.mus = np.asarray(mus)
            self.mu_tuples = tuples
            self._mu_exact = _y_eigenvalues_box_exact(self.cross_section.dims, self.J_y)
        elif isinstance(self.cross_section, External):
            mus = self.cross_section.mus
            if len(mus) < self.J_y:
                raise ValueError(
                    f"External list has {len(mus)} eigenvalues, J_y={self.J_y} requested"
                )
            self.mus = np.asarray(mus[: self.J_y])
            self.mu_tuples = None
            self._mu_exact = None
        else:
            raise TypeError("cross_section must be Box or External")

    # -- basic geometry -----------------------------------------------------

    @property
    def n_cross_dims(self) -> int:
        """Dimension of Omega_y (N - 1)."""
        if isinstance(self.cross_section, Box):
            return len(self.cross_section.dims)
        return 1

    def mu(self, j: int) -> float:
        """j-th cross-section eigenvalue, 1-based."""
        if j < 1 or j > len(self.mus):
            raise IndexOutOfRange(f"j={j} outside eigenvalue list of length {len(self.mus)}")
        return float(self.mus[j - 1])

    def kappa(self, k: int) -> float:
        """x-Laplacian eigenvalue (k pi / a)^2."""
        return (k * math.pi / self.a_float) ** 2

    # -- rates ----------------------------------------------------------------

    def x_eigenvalue(self, k: int, j: int) -> float:
        """Rate -k^4 pi^4/a^4 + (nu - 2 mu_j) k^2 pi^2/a^2 of the 1-D problem."""
        if k < 1:
            raise IndexOutOfRange(f"k={k} must be >= 1")
        mu = self.mu(j)
        kap = self.kappa(k)
        return -kap * kap + (self.nu_float - 2.0 * mu) * kap

    def y_shift(self, j: int) -> float:
        """Zeroth-order rate -(mu_j^2 - nu mu_j) of the j-th slice."""
        mu = self.mu(j)
        return -(mu * mu - self.nu_float * mu)

    def mode_rate(self, k: int, j: int) -> "ModeRate":
        lx = self.x_eigenvalue(k, j)
        ls = self.y_shift(j)
        return ModeRate(k=k, j=j, lambda_x=lx, lambda_y_shift=ls, total=lx + ls)

    def x_rates(self, j: int, count: Optional[int] = None) -> np.ndarray:
        """Vector of 1-D rates for slice j (no zeroth-order shift)."""
        n = count if count is not None else self.K_x
        ks = np.arange(1, n + 1, dtype=float)
        kap = (ks * math.pi / self.a_float) ** 2
        return -kap * kap + (self.nu_float - 2.0 * self.mu(j)) * kap

    def slice_rates(self, j: int, count: Optional[int] = None) -> np.ndarray:
        """Full tensor rates of slice j (1-D rates plus the zeroth-order shift)."""
        return self.x_rates(j, count) + self.y_shift(j)

    def rate_matrix(self) -> np.ndarray:
        """(K_x, J_y) matrix of tensor rates Lambda_{k,j}."""
        ks = np.arange(1, self.K_x + 1, dtype=float)
        kap = (ks * math.pi / self.a_float) ** 2
        total = np.empty((self.K_x, self.J_y))
        for jj in range(self.J_y):
            mu = float(self.mus[jj])
            s = kap + mu
            total[:, jj] = -s * s + self.nu_float * s
        return total

    def k_star(self, j: int) -> int:
        """Index beyond which the 1-D rate is strictly decreasing in k.

        d/dk of the rate is negative once k^2 > (nu - 2 mu_j) a^2 / (2 pi^2).
        """
        c = (self.nu_float - 2.0 * self.mu(j)) * self.a_float**2 / (2.0 * math.pi**2)
        if c <= 0:
            return 1
        return int(math.floor(math.sqrt(c))) + 1


@dataclass(frozen=True)
class ModeRate:
    """Decomposed rate of tensor mode (k, j); units 1/time."""

    k: int
    j: int
    lambda_x: float
    lambda_y_shift: float
    total: float


# ---------------------------------------------------------------------------
# critical set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalVerdict:
    """Outcome of the critical-set scan.

    ``kind`` is one of ``clear``, ``critical``, ``near``.  For the latter two,
    (j, k, l) identify the colliding candidate and ``distance`` the float gap
    |nu - (2 mu_j + pi^2 (k^2+l^2)/a^2)|.
    """

    kind: str
    j: int = 0
    k: int = 0
    l: int = 0
    distance: float = math.inf

    @property
    def is_clear(self) -> bool:
        return self.kind == "clear"

    @property
    def blocks_synthesis(self) -> bool:
        return self.kind in ("critical", "near")


def critical_set_check(spec: SpectrumSpec, search_bound: Optional[int] = None) -> CriticalVerdict:
    """Exhaustive scan of critical values <= nu + tol.

    Exact (rational) inputs give an exact Critical/Clear decision; floats are
    classified Near when within ``crit_tol`` (relative to max(1, |nu|)).
    """
    nu = spec.nu_float
    tol = spec.crit_tol * max(1.0, abs(nu))
    a2 = spec.a_float**2
    pi2 = math.pi**2
    exact_ok = spec._nu_exact is not None and spec._a_exact is not None and spec._mu_exact is not None

    best = CriticalVerdict("clear")
    j_cap = search_bound if search_bound is not None else spec.J_y
    j_cap = min(j_cap, len(spec.mus))
    # smallest x-part is pi^2 (1+4)/a^2, so only small j can produce candidates
    for j in range(1, j_cap + 1):
        mu = spec.mu(j)
        rem = nu + tol - 2.0 * mu
        if rem < 5.0 * pi2 / a2:
            # mus are nondecreasing: no larger j can contribute either
            break
        k_hi = int(math.floor(math.sqrt(rem * a2 / pi2))) + 1
        for k in range(1, k_hi + 1):
            for l in range(k + 1, k_hi + 1):
                cand = 2.0 * mu + pi2 * (k * k + l * l) / a2
                dist = abs(nu - cand)
                if exact_ok:
                    cand_exact = spec._mu_exact[j - 1].scale(Fraction(2)) + (
                        spec._a_exact.pi_over_length_squared().scale(Fraction(k * k + l * l))
                    )
                    diff = cand_exact - ExactScalar.rational(spec._nu_exact)
                    if diff.is_zero():
                        return CriticalVerdict("critical", j, k, l, 0.0)
                if dist <= tol and dist < best.distance:
                    best = CriticalVerdict("near", j, k, l, dist)
    return best


def require_clear(spec: SpectrumSpec):
    """Raise CriticalParameter unless the verdict is Clear."""
    from .errors import CriticalParameter

    verdict = critical_set_check(spec)
    if verdict.blocks_synthesis:
        raise CriticalParameter(
            f"nu={spec.nu_float} is {verdict.kind} at (j={verdict.j}, k={verdict.k}, "
            f"l={verdict.l}), distance {verdict.distance:.3e}"
        )
    return verdict


# ---------------------------------------------------------------------------
# index thresholds
# ---------------------------------------------------------------------------

def n0_index(spec: SpectrumSpec) -> int:
    """min{j : 2 mu_j - nu > 0}."""
    for j in range(1, len(spec.mus) + 1):
        if 2.0 * spec.mu(j) - spec.nu_float > 0:
            return j
    raise ThresholdBeyondTruncation(
        f"no j <= {len(spec.mus)} with 2 mu_j > nu = {spec.nu_float}"
    )


def K0_index(spec: SpectrumSpec) -> int:
    """min{k : mu_k > nu}."""
    for j in range(1, len(spec.mus) + 1):
        if spec.mu(j) > spec.nu_float:
            return j
    raise ThresholdBeyondTruncation(
        f"no j <= {len(spec.mus)} with mu_j > nu = {spec.nu_float}"
    )


def c0_shift(rates: np.ndarray) -> float:
    """Positivity shift for a truncated family of decay rates.

    Returns ``max(0, max(rates)) + 1`` so that ``c0 - rate > 0`` for every
    listed rate; zero when the family is already uniformly stable.
    """
    m = float(np.max(rates))
    if m < 0.0:
        return 0.0
    return max(0.0, m) + 1.0


# ---------------------------------------------------------------------------
# counting function and gaps
# ---------------------------------------------------------------------------

def counting_function(rates: Sequence[float], r: float) -> int:
    """N(r) = #{Lambda in the family : Lambda <= r} for positive rates."""
    arr = np.asarray(rates, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("counting_function expects positive rates (apply the c0 shift first)")
    return int(np.count_nonzero(arr <= r))


def bound_check(spec: SpectrumSpec, j: int, n_grid: int = 48):
    """Check N(r) < (a/pi) r^(1/4) on a log grid of r and fit the constant.

    Returns a dict with the grid, counts, the smallest admissible constant
    ``C = max N(r)/r^(1/4)``, and any grid violation of the (a/pi) bound in
    the regime where the family is uniformly stable (j >= n0).
    """
    lam = -spec.x_rates(j)
    shift = c0_shift(-lam)
    rates = lam + shift
    r_lo = max(float(rates.min()) * 0.5, 1e-6)
    r_hi = float(rates.max()) * 2.0
    grid = np.exp(np.linspace(math.log(r_lo), math.log(r_hi), n_grid))
    counts = np.array([counting_function(rates, r) for r in grid])
    ratio = counts / grid**0.25
    a_over_pi = spec.a_float / math.pi
    try:
        stable_regime = j >= n0_index(spec)
    except ThresholdBeyondTruncation:
        stable_regime = False
    violations = []
    if stable_regime and shift == 0.0:
        bad = np.nonzero(counts >= a_over_pi * grid**0.25)[0]
        violations = [float(grid[i]) for i in bad]
    return {
        "r_grid": grid,
        "counts": counts,
        "smallest_C": float(ratio.max()),
        "a_over_pi": a_over_pi,
        "stable_regime": bool(stable_regime),
        "c0": shift,
        "violations": violations,
    }


def gap_check(rates: Sequence[float], rel_tol: float = 1e-12):
    """Minimal pairwise gap of a rate family, plus the linear-gap constant.

    Returns ``(rho_hat, linear_gap)`` where ``linear_gap`` is the minimum of
    |Lambda_{k+1} - Lambda_k| over consecutive indices (the slope constant of
    the |Lambda_k - Lambda_l| >= rho |k - l| hypothesis).  Raises
    DuplicateRate when two rates coincide within ``rel_tol`` relative: the
    parameter is then effectively critical.
    """
    arr = np.asarray(rates, dtype=float)
    n = len(arr)
    if n < 2:
        return math.inf, math.inf
    scale = float(np.max(np.abs(arr))) or 1.0
    rho = math.inf
    for i in range(n):
        for m in range(i + 1, n):
            gap = abs(arr[i] - arr[m])
            if gap <= rel_tol * scale:
                raise DuplicateRate(
                    f"rates {i + 1} and {m + 1} coincide ({arr[i]:.6e} vs {arr[m]:.6e})"
                )
            rho = min(rho, gap)
    linear = float(np.min(np.abs(np.diff(arr))))
    return rho, linear


def weyl_fit(spec: SpectrumSpec):
    """Least-squares slope of log mu_j vs log j over the upper half range.

    For box cross-sections the slope approaches 2/(N-1).
    """
    J = len(spec.mus)
    lo = max(1, J // 2)
    js = np.arange(lo, J + 1, dtype=float)
    mus = spec.mus[lo - 1 : J]
    slope, intercept = np.polyfit(np.log(js), np.log(mus), 1)
    return {"slope": float(slope), "intercept": float(intercept), "expected": 2.0 / spec.n_cross_dims}
