"""Interior (pointwise) 1-D control: minimal time and moment synthesis.

The minimal-time quantity for an actuator at x0 is driven by how fast
|sin(k pi x0/a)| can approach zero:

    s_k = -log|sin(k pi x0/a)| * a^4 / (pi^4 k^4),

a limsup of which separates controllable from uncontrollable horizons.  A
limsup is not computable; the estimator scans k <= k_max in extended
precision and reports the running maximum ``T0_hat`` over the whole scanned
range (this is the synthesis gate) together with the tail maximum over
k >= k_max/2 (``T0_tail``, the limsup-oriented diagnostic: for algebraic
points it collapses to ~log(k)/k^4 scale).

Quartic spectral decay makes finite scans blind to deep resonances at large
k, so Liouville-type *test points* must carry their near-resonance at small
k to be visible at all; see the `liouville` rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import mpmath as mp
import numpy as np

from .biorthogonal import K_BIO_MAX
from .errors import BelowMinimalTime, NoWitnessFound, RationalPoint
from .modal import pointwise_gain_x
from .moments import MomentSolver
from .spectrum import SpectrumSpec, require_clear

DEFAULT_K_MAX = 10_000
DEFAULT_MARGIN = 0.10

#: Liouville-type series rules: name -> (description, builder(depth) -> mpf, dps)
#: ``classic10``: sum 10^(-n!).  Its rational convergents p/q satisfy
#: |z - p/q| ~ q^{-(n+1)} only, which the quartic normalization crushes:
#: the s_k spikes at the convergent denominators decay like log(q)/q^4, so
#: the scanned T0_hat of the truncation is O(1) only through the k=1 term.
#: ``quartic_anchor3``: 1/3 + sum 10^(-36 n!), a quartically-graded variant
#: whose depth-6 truncation exhibits a genuine deep resonance at k=3
#: (|sin(3 pi z)| ~ 3 pi 10^(-36)), i.e. minimal-time behavior visible to a
#: desk-scale scan.
LIOUVILLE_RULES = {
    "classic10": ("sum_{n<=depth} 10^(-n!)", 800),
    "quartic_anchor3": ("1/3 + sum_{n<=depth} 10^(-36 n!)", 320),
}


@dataclass(frozen=True)
class PointSpec:
    """Actuator position as a ratio x0/a in (0, 1), with its arithmetic type."""

    kind: str  # rational | real | algebraic | liouville
    data: tuple
    k_max: int = DEFAULT_K_MAX

    @staticmethod
    def rational(p: int, q: int, k_max: int = DEFAULT_K_MAX) -> "PointSpec":
        return PointSpec("rational", (Fraction(p, q),), k_max)

    @staticmethod
    def real(value, k_max: int = DEFAULT_K_MAX) -> "PointSpec":
        return PointSpec("real", (str(value),), k_max)

    @staticmethod
    def algebraic(poly_coeffs, root_index: int = 0, k_max: int = DEFAULT_K_MAX) -> "PointSpec":
        """Root of an integer polynomial (coefficients highest degree first)."""
        return PointSpec("algebraic", (tuple(int(c) for c in poly_coeffs), root_index), k_max)

    @staticmethod
    def liouville(rule: str = "quartic_anchor3", depth: int = 6,
                  k_max: int = DEFAULT_K_MAX) -> "PointSpec":
        if rule not in LIOUVILLE_RULES:
            raise ValueError(f"unknown Liouville rule {rule!r}")
        return PointSpec("liouville", (rule, depth), k_max)

    @property
    def is_rational(self) -> bool:
        return self.kind == "rational"

    @property
    def dps(self) -> int:
        if self.kind == "liouville":
            return LIOUVILLE_RULES[self.data[0]][1]
        return 60

    def value(self) -> mp.mpf:
        """x0/a at the rule's working precision (mp.dps must already be set)."""
        if self.kind == "rational":
            fr = self.data[0]
            return mp.mpf(fr.numerator) / mp.mpf(fr.denominator)
        if self.kind == "real":
            return mp.mpf(self.data[0])
        if self.kind == "algebraic":
            coeffs, idx = self.data
            roots = mp.polyroots([mp.mpf(c) for c in coeffs], maxsteps=200, extraprec=200)
            real_roots = sorted(
                float(r.real) for r in roots if abs(r.imag) < mp.mpf("1e-30") and 0 < r.real < 1
            )
            if idx >= len(real_roots):
                raise ValueError("root index outside the unit-interval real roots")
            target = real_roots[idx]
            for r in roots:
                if abs(r.imag) < mp.mpf("1e-30") and abs(float(r.real) - target) < 1e-12:
                    return mp.mpf(r.real)
            raise ValueError("root refinement failed")
        rule, depth = self.data
        if rule == "classic10":
            return mp.fsum(mp.mpf(10) ** (-mp.factorial(n)) for n in range(1, depth + 1))
        z = mp.mpf(1) / 3
        return z + mp.fsum(mp.mpf(10) ** (-36 * mp.factorial(n)) for n in range(1, depth + 1))

    def label(self) -> str:
        if self.kind == "liouville":
            return f"liouville:{self.data[0]}:depth{self.data[1]}"
        if self.kind == "algebraic":
            return f"algebraic:{list(self.data[0])}:root{self.data[1]}"
        if self.kind == "rational":
            return f"rational:{self.data[0]}"
        return f"real:{self.data[0]}"


@dataclass
class MinimalTimeReport:
    """Scan of s_k with running maxima and spike locations."""

    k: np.ndarray
    neg_log_sin: np.ndarray
    s: np.ndarray
    running_max: np.ndarray
    T0_hat: float
    T0_argmax: int
    T0_tail: float
    still_growing: bool
    spikes: list = field(default_factory=list)  # k with -log|sin| >= 1
    x0_over_a: float = 0.0


def _neg_log_sin_scan(z: mp.mpf, k_max: int):
    """-log|sin(pi k z)| for k = 1..k_max, via high-precision argument reduction.

    The fractional part of k z is exact at working precision; away from
    resonances a double-precision sine suffices, near them the logarithm is
    taken in mp (|log sin(pi d)| = |log(pi d)| + O(d^2)).
    """
    out = np.empty(k_max)
    kz = mp.mpf(0)
    for k in range(1, k_max + 1):
        kz += z
        fr = kz - mp.floor(kz)
        d = fr if fr <= mp.mpf("0.5") else 1 - fr
        if d == 0:
            raise RationalPoint(f"sin(k pi x0/a) vanishes exactly at k={k}")
        if d > mp.mpf("1e-8"):
            out[k - 1] = -math.log(math.sin(math.pi * float(d)))
        else:
            out[k - 1] = -float(mp.log(mp.pi * d))
    return out


def minimal_time_estimate(point: PointSpec, a: float = math.pi,
                          k_max: Optional[int] = None) -> MinimalTimeReport:
    """Scan s_k and report the running-max minimal-time estimate.

    Raises RationalPoint for rational x0/a (some sine vanishes exactly and
    pointwise control is impossible).
    """
    if point.is_rational:
        raise RationalPoint("x0/a is rational: pointwise control impossible")
    km = k_max if k_max is not None else point.k_max
    with mp.workdps(point.dps + 20):
        z = point.value()
        if not (0 < z < 1):
            raise ValueError("x0/a must lie in (0, 1)")
        neg_log = _neg_log_sin_scan(z, km)
        z_float = float(z)
    ks = np.arange(1, km + 1, dtype=float)
    quartic = ks**4 * math.pi**4 / a**4
    s = neg_log / quartic
    running = np.maximum.accumulate(s)
    argmax = int(np.argmax(s)) + 1
    tail = float(np.max(s[km // 2 - 1 :]))
    spikes = [int(k) for k in ks[neg_log >= 1.0]]
    return MinimalTimeReport(
        k=ks.astype(int),
        neg_log_sin=neg_log,
        s=s,
        running_max=running,
        T0_hat=float(s[argmax - 1]),
        T0_argmax=argmax,
        T0_tail=tail,
        still_growing=argmax >= km // 2,
        spikes=spikes,
        x0_over_a=z_float,
    )


@dataclass
class PointSynthesisReport:
    control_norm: float
    moment_residual_max: float
    tail_free_decay: float
    gram_condition: float
    c0: float
    K_trunc: int
    T0_hat: float
    threshold: float


def synthesize_point_control(
    u0: np.ndarray,
    T: float,
    point: PointSpec,
    spec: SpectrumSpec,
    j: int,
    K_trunc: int = 8,
    margin: float = DEFAULT_MARGIN,
    estimate: Optional[MinimalTimeReport] = None,
    shifted: bool = False,
    t_offset: float = 0.0,
    n_samples: int = 512,
):
    """Pointwise control nulling modes k <= K_trunc for T above the gate.

    The gate is T > (1 + margin) T0_hat; at or below it the synthesis is
    refused with BelowMinimalTime (see `negative_certificate` for the
    witness).  Nothing is claimed about T exactly at the minimal time.
    """
    require_clear(spec)
    if point.is_rational:
        raise RationalPoint("x0/a is rational: pointwise control impossible")
    if estimate is None:
        estimate = minimal_time_estimate(point, spec.a_float)
    threshold = (1.0 + margin) * estimate.T0_hat
    if T <= threshold:
        raise BelowMinimalTime(
            f"T={T} <= (1+margin) T0_hat = {threshold:.6g}; minimal-time gate refuses synthesis"
        )
    u0 = np.asarray(u0, dtype=float)
    if K_trunc > K_BIO_MAX:
        raise ValueError(f"K_trunc={K_trunc} exceeds K_bio_max={K_BIO_MAX}")
    K_trunc = min(K_trunc, len(u0))
    x0 = estimate.x0_over_a * spec.a_float
    rates_full = spec.slice_rates(j, len(u0)) if shifted else spec.x_rates(j, len(u0))
    rates = rates_full[:K_trunc]
    gains = pointwise_gain_x(spec, x0, K_trunc)
    targets = -np.exp(rates * T) * u0[:K_trunc] / gains
    sol = MomentSolver(rates, T).solve(targets)
    from .boundary_1d import control_from_solution

    control = control_from_solution(sol, "pointwise_1d", t_offset, x0=x0, n_samples=n_samples)
    tail = float(np.sum(np.exp(2 * rates_full[K_trunc:] * T) * u0[K_trunc:] ** 2))
    report = PointSynthesisReport(
        control_norm=control.norm_l2(),
        moment_residual_max=sol.residual_max,
        tail_free_decay=tail,
        gram_condition=sol.family.gram_condition,
        c0=sol.c0,
        K_trunc=K_trunc,
        T0_hat=estimate.T0_hat,
        threshold=threshold,
    )
    return control, report


@dataclass
class BlowupWitness:
    k: np.ndarray
    log10_ratio: np.ndarray
    ratio_cap: np.ndarray  # ratios clipped at float range for reporting
    T: float
    T0_hat: float


def negative_certificate(
    point: PointSpec,
    spec: SpectrumSpec,
    j: int,
    T: float,
    estimate: Optional[MinimalTimeReport] = None,
) -> BlowupWitness:
    """Observability blow-up witnesses for T below the scanned minimal time.

    For each scanned k with s_k > T, reports the ratio
    e^{2 lambda_k T} / sin^2(k pi x0/a) (in log10 to survive overflow): a
    lower bound for the observability constant of the truncated family,
    exploding along the witness set.  NoWitnessFound means the scan depth is
    inconclusive at this horizon.
    """
    if estimate is None:
        estimate = minimal_time_estimate(point, spec.a_float)
    witnesses = np.nonzero(estimate.s > T)[0]
    if len(witnesses) == 0:
        raise NoWitnessFound(
            f"no scanned k has s_k > T = {T}; inconclusive at depth k_max={len(estimate.s)}"
        )
    ks = witnesses + 1
    lam = np.array([spec.x_eigenvalue(int(k), j) for k in ks])
    # log ratio = 2 lambda_k T + 2 (-log|sin|)
    log_ratio = 2.0 * lam * T + 2.0 * estimate.neg_log_sin[witnesses]
    log10_ratio = log_ratio / math.log(10.0)
    ratio = np.where(log10_ratio < 300, np.power(10.0, np.minimum(log10_ratio, 300)), np.inf)
    return BlowupWitness(
        k=ks.astype(int),
        log10_ratio=log10_ratio,
        ratio_cap=ratio,
        T=T,
        T0_hat=estimate.T0_hat,
    )
