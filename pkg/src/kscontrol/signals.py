"""Control signals: sampled representations plus exact analytic payloads.

Synthesized controls are sums of exponentials (moment method) or Legendre
polynomials (Gramian steering) per window.  Closed-loop verification
integrates them against the modal flow in closed form, so the only numerical
error downstream of a synthesis is the linear-algebra residual of the
synthesis itself.  Sampled grids exist for export and for generic
(piecewise-constant / piecewise-linear) controls; the declared quadrature is
honored exactly by the integrator.

Overflow discipline: every stored exponential carries its own reference time
(window start for decaying terms, window end for growing ones) so evaluation
exponents are always <= a small bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import special as sps

PIECEWISE_CONSTANT = "piecewise_constant"
PIECEWISE_LINEAR = "piecewise_linear"

# Sign of the boundary input as seen by the modal ODE: frozen once by the
# duality calibration test in tests/test_modal.py.  With orthonormal sines
# and the control acting on the Laplacian trace at x=0, integration by parts
# gives  d/dt u_k = lambda_k u_k - sqrt(2/a) (k pi / a) q(t).
S_BOUNDARY = -1.0


def phi1(z):
    """(e^z - 1)/z with the removable singularity filled."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    out = np.expm1(zs) / zs
    return np.where(small, 1.0 + z / 2.0, out)


def phi2(z):
    """(e^z - 1 - z)/z^2 with a series guard against cancellation."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    out = (np.expm1(zs) - zs) / (zs * zs)
    series = 0.5 + z / 6.0 + z * z / 24.0
    return np.where(small, series, out)


def exp_sum_integral(lam, exps, refs, t0: float, t1: float):
    """int_{t0}^{t1} e^{lam (t1 - s)} e^{b (s - r)} ds for each (lam, b) pair.

    ``lam`` has shape (M,), ``exps``/``refs`` shape (E,).  Returns (M, E).
    Evaluated in the end-anchored form (f(t1) - f(t0)) / (b - lam) with a
    series fallback near b = lam; f stays bounded because the stored
    references keep each exponent nonpositive on the window.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    b = np.asarray(exps, dtype=float)[None, :]
    r = np.asarray(refs, dtype=float)[None, :]
    lamc = lam[:, None]
    delta = t1 - t0
    g1 = b * (t1 - r)                      # exponent of f at t1
    g0 = lamc * delta + b * (t0 - r)       # exponent of f at t0
    diff = (b - lamc) * delta
    small = np.abs(diff) < 1e-6
    denom = np.where(small, 1.0, b - lamc)
    main = (np.exp(g1) - np.exp(g0)) / denom
    # series: e^{g0} * delta * (1 + d/2 + d^2/6), d = (b - lam) delta
    series = np.exp(g0) * delta * (1.0 + diff / 2.0 + diff * diff / 6.0)
    return np.where(small, series, main)


def exp_pair_l2(exps, refs, coeffs, t0: float, t1: float) -> float:
    """L2(t0, t1)^2 of sum_i c_i e^{b_i (t - r_i)} for scalar coefficients."""
    b = np.asarray(exps, dtype=float)
    r = np.asarray(refs, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    s = b[:, None] + b[None, :]
    g = -b[:, None] * r[:, None] - b[None, :] * r[None, :]
    e1 = np.exp(s * t1 + g)
    e0 = np.exp(s * t0 + g)
    small = np.abs(s * (t1 - t0)) < 1e-8
    denom = np.where(small, 1.0, s)
    block = np.where(small, np.exp(s * t0 + g) * (t1 - t0), (e1 - e0) / denom)
    return float(c @ block @ c)


def legendre_mode_integrals(lam, degree: int, delta: float):
    """I_p(lam) = int_0^delta e^{lam (delta - s)} P_p(2 s/delta - 1) ds.

    Via int_{-1}^{1} e^{z tau} P_p(tau) dtau = 2 i_p(z) (modified spherical
    Bessel), with the exponentially scaled form for stability at large decay
    rates.  Returns array (len(lam), degree + 1).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    p = np.arange(degree + 1)
    out = np.empty((len(lam), degree + 1))
    z = -lam * delta / 2.0
    for i, zi in enumerate(z):
        if abs(zi) < 1e-6:
            row = np.zeros(degree + 1)
            row[0] = 1.0 + zi * zi / 6.0
            if degree >= 1:
                row[1] = zi / 3.0
            if degree >= 2:
                row[2] = zi * zi / 15.0
            out[i] = delta * math.exp(-zi) * row
        elif zi > 0:
            # decaying mode: e^{-z} i_p(z) is scipy's ive up to the half-order factor
            scaled = sps.ive(p + 0.5, zi) * math.sqrt(math.pi / (2.0 * zi))
            out[i] = delta * scaled
        else:
            # growing mode (small positive rates only): direct evaluation
            vals = np.array([float(sps.spherical_in(int(n), -zi)) for n in p])
            signs = np.where(p % 2 == 0, 1.0, -1.0)
            out[i] = delta * math.exp(-zi) * signs * vals
    return out


@dataclass
class ExpSegment:
    """value(t) = sum_i coeffs[i] * exp(exponents[i] * (t - refs[i])) on [t0, t1].

    ``coeffs`` has shape (E,) for scalar signals or (E, R) for R-row signals.
    """

    t0: float
    t1: float
    exponents: np.ndarray
    refs: np.ndarray
    coeffs: np.ndarray

    def value(self, t):
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        basis = np.exp(self.exponents[None, :] * (tt[:, None] - self.refs[None, :]))
        out = basis @ self.coeffs
        return out if np.ndim(t) else out[0]

    def mode_duhamel(self, lam, t0: float, t1: float):
        """Duhamel integrals int e^{lam (t1-s)} value(s) ds over [t0, t1].

        Returns (M,) for scalar signals, (M, R) for row signals.
        """
        block = exp_sum_integral(lam, self.exponents, self.refs, t0, t1)
        return block @ self.coeffs

    def l2_squared(self, row_gram: Optional[np.ndarray] = None) -> float:
        if self.coeffs.ndim == 1:
            return exp_pair_l2(self.exponents, self.refs, self.coeffs, self.t0, self.t1)
        total = 0.0
        n_rows = self.coeffs.shape[1]
        gram = row_gram if row_gram is not None else np.eye(n_rows)
        for i in range(n_rows):
            for m in range(n_rows):
                if gram[i, m] == 0.0:
                    continue
                # cross term int q_i q_m via the bilinear exponential integral
                total += gram[i, m] * _exp_cross_l2(
                    self.exponents, self.refs, self.coeffs[:, i], self.coeffs[:, m], self.t0, self.t1
                )
        return total


def _exp_cross_l2(exps, refs, ci, cm, t0, t1) -> float:
    b = np.asarray(exps, dtype=float)
    r = np.asarray(refs, dtype=float)
    s = b[:, None] + b[None, :]
    g = -b[:, None] * r[:, None] - b[None, :] * r[None, :]
    small = np.abs(s * (t1 - t0)) < 1e-8
    denom = np.where(small, 1.0, s)
    block = np.where(
        small,
        np.exp(s * t0 + g) * (t1 - t0),
        (np.exp(s * t1 + g) - np.exp(s * t0 + g)) / denom,
    )
    return float(ci @ block @ cm)


@dataclass
class LegendreSegment:
    """value(t) = sum_p coeffs[p] P_p(2 (t - t0)/(t1 - t0) - 1) on [t0, t1]."""

    t0: float
    t1: float
    coeffs: np.ndarray  # (P,) or (P, R)

    def value(self, t):
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        tau = 2.0 * (tt - self.t0) / (self.t1 - self.t0) - 1.0
        deg = self.coeffs.shape[0] - 1
        V = npleg.legvander(tau, deg)
        out = V @ self.coeffs
        return out if np.ndim(t) else out[0]

    def mode_duhamel(self, lam, t0: float, t1: float):
        deg = self.coeffs.shape[0] - 1
        if math.isclose(t0, self.t0) and math.isclose(t1, self.t1):
            I = legendre_mode_integrals(lam, deg, self.t1 - self.t0)
            return I @ self.coeffs
        # partial span: re-expand the restricted polynomials in the Legendre
        # basis of [t0, t1] (exact, degree-preserving), then integrate there
        R = self._restriction_matrix(t0, t1)
        I = legendre_mode_integrals(lam, deg, t1 - t0)
        return I @ (R @ self.coeffs)

    def _restriction_matrix(self, t0: float, t1: float) -> np.ndarray:
        """R[q, p]: coefficient of P_q on [t0, t1] in P_p restricted from the window."""
        deg = self.coeffs.shape[0] - 1
        nodes, wts = np.polynomial.legendre.leggauss(deg + 1)
        s = t0 + (t1 - t0) * (nodes + 1.0) / 2.0
        tau_parent = 2.0 * (s - self.t0) / (self.t1 - self.t0) - 1.0
        Vp = npleg.legvander(tau_parent, deg)   # (n, P) values of parent P_p
        Vq = npleg.legvander(nodes, deg)        # (n, P) values of child P_q
        q = np.arange(deg + 1)
        # c_{qp} = (2q+1)/2 int P_p(tau(s)) P_q(tau') dtau'
        return ((2.0 * q[:, None] + 1.0) / 2.0) * (Vq.T @ (wts[:, None] * Vp))

    def l2_squared(self, row_gram: Optional[np.ndarray] = None) -> float:
        delta = self.t1 - self.t0
        p = np.arange(self.coeffs.shape[0])
        w = delta / (2.0 * p + 1.0)
        if self.coeffs.ndim == 1:
            return float(np.sum(w * self.coeffs**2))
        gram = row_gram if row_gram is not None else np.eye(self.coeffs.shape[1])
        inner = self.coeffs.T @ (w[:, None] * self.coeffs)
        return float(np.sum(gram * inner))


@dataclass
class ControlSignal:
    """Time-sampled control with optional exact analytic payload.

    ``kind`` is one of ``boundary_1d``, ``pointwise_1d``, ``boundary_nd``,
    ``pointwise_nd``.  ``grid`` is strictly increasing; for piecewise-constant
    quadrature ``values`` holds one entry per interval, for piecewise-linear
    one per node.  N-D signals carry row data: ``values[s, r]`` is the
    coefficient of row basis function r at sample s, ``mass[r, j]`` maps row
    coefficients to y-modal gains, and ``row_gram`` gives the L2(control
    region) inner products of the row basis (identity for tensor rows).
    """

    kind: str
    grid: np.ndarray
    values: np.ndarray
    quadrature: str = PIECEWISE_CONSTANT
    x0: Optional[float] = None
    mass: Optional[np.ndarray] = None
    row_gram: Optional[np.ndarray] = None
    omega: Optional[tuple] = None
    segments: Optional[list] = field(default=None)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("control grid must be strictly increasing")
        n_expected = len(self.grid) - 1 if self.quadrature == PIECEWISE_CONSTANT else len(self.grid)
        if self.values.shape[0] != n_expected:
            raise ValueError(
                f"values length {self.values.shape[0]} does not match grid under {self.quadrature}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control values must be finite")

    @property
    def t_start(self) -> float:
        return float(self.grid[0])

    @property
    def t_end(self) -> float:
        return float(self.grid[-1])

    @property
    def is_analytic(self) -> bool:
        return bool(self.segments)

    def norm_l2(self) -> float:
        """L2 norm over the covered window (analytic when segments exist)."""
        if self.is_analytic:
            total = sum(seg.l2_squared(self.row_gram) for seg in self.segments)
            return math.sqrt(max(total, 0.0))
        dt = np.diff(self.grid)
        if self.quadrature == PIECEWISE_CONSTANT:
            sq = self._row_square(self.values)
            return math.sqrt(float(np.sum(sq * dt)))
        sq = self._row_square(self.values)
        return math.sqrt(float(np.sum(0.5 * (sq[1:] + sq[:-1]) * dt)))

    def _row_square(self, vals):
        if vals.ndim == 1:
            return vals**2
        if self.row_gram is None:
            return np.sum(vals**2, axis=1)
        return np.einsum("sr,rq,sq->s", vals, self.row_gram, vals)

    def resample(self, n: int) -> "ControlSignal":
        """Sampled copy on an n-interval uniform grid (export helper).

        Analytic payloads are evaluated exactly at the new nodes; plain
        sampled signals are interpolated per their quadrature.
        """
        grid = np.linspace(self.t_start, self.t_end, n + 1)
        if self.is_analytic:
            vals = self.value_at(grid)
            quad = PIECEWISE_LINEAR
        elif self.quadrature == PIECEWISE_LINEAR:
            vals = _interp_rows(grid, self.grid, self.values)
            quad = PIECEWISE_LINEAR
        else:
            mid = 0.5 * (grid[1:] + grid[:-1])
            idx = np.clip(np.searchsorted(self.grid, mid, side="right") - 1, 0, len(self.values) - 1)
            vals = self.values[idx]
            quad = PIECEWISE_CONSTANT
        return ControlSignal(
            kind=self.kind, grid=grid, values=vals, quadrature=quad, x0=self.x0,
            mass=self.mass, row_gram=self.row_gram, omega=self.omega, segments=self.segments,
        )

    def value_at(self, t):
        """Evaluate the control at times t (uses the analytic payload if any)."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        if self.is_analytic:
            out = None
            for i, ti in enumerate(tt):
                seg = self._segment_for(ti)
                v = seg.value(ti)
                if out is None:
                    out = np.zeros((len(tt),) + np.shape(v))
                out[i] = v
            return out if np.ndim(t) else out[0]
        if self.quadrature == PIECEWISE_LINEAR:
            out = _interp_rows(tt, self.grid, self.values)
        else:
            idx = np.clip(np.searchsorted(self.grid, tt, side="right") - 1, 0, len(self.values) - 1)
            out = self.values[idx]
        return out if np.ndim(t) else out[0]

    def _segment_for(self, t: float):
        for seg in self.segments:
            if seg.t0 - 1e-12 <= t <= seg.t1 + 1e-12:
                return seg
        raise ValueError(f"t={t} outside analytic segments")


def _interp_rows(t, grid, values):
    if values.ndim == 1:
        return np.interp(t, grid, values)
    out = np.empty((len(t), values.shape[1]))
    for r in range(values.shape[1]):
        out[:, r] = np.interp(t, grid, values[:, r])
    return out


def sampled_from_segments(kind, segments, n: int = 2048, **kw) -> ControlSignal:
    """Build a ControlSignal whose sampled view is an n-node rendering of
    the exact analytic payload."""
    t0 = segments[0].t0
    t1 = segments[-1].t1
    grid = np.linspace(t0, t1, n + 1)
    sig = ControlSignal(
        kind=kind, grid=grid, values=np.zeros((n + 1,)), quadrature=PIECEWISE_LINEAR,
        segments=segments, **kw
    )
    vals = sig.value_at(grid)
    sig.values = np.asarray(vals, dtype=float)
    return sig
