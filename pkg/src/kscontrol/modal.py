"""Exact-in-time spectral evolution of the truncated system.

States are modal coefficient arrays in the orthonormal sine basis: a vector
(K,) for 1-D problems, a matrix (K_x, J_y) on the cylinder.  The linear flow
is diagonal, so every evolution step is an exact exponential update; controls
enter through closed-form Duhamel integrals (analytic payloads) or exact
per-sample phi1/phi2 updates (sampled payloads).  Sources are piecewise
linear in time and also integrated exactly.

The modal input coefficients, derived from the transposition identity:

* boundary control q at x=0 (Laplacian trace):
  du_{kj}/dt = Lambda_{kj} u_{kj} + S_BOUNDARY sqrt(2/a) (k pi/a) <q, psi_j>_omega
* pointwise control at x0:
  du_{kj}/dt = Lambda_{kj} u_{kj} + sqrt(2/a) sin(k pi x0/a) <h, psi_j>_omega

Both signs are guarded by the duality calibration tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import QuadratureUnderResolved
from .signals import (
    PIECEWISE_CONSTANT,
    S_BOUNDARY,
    ControlSignal,
    phi1,
    phi2,
)
from .spectrum import SpectrumSpec


@dataclass
class ModalState:
    """Modal coefficients at a time instant, with their decay rates."""

    coeffs: np.ndarray
    time: float
    spec: SpectrumSpec
    rates: np.ndarray
    j_slice: Optional[int] = None  # set for 1-D states: the cross-mode index

    def copy(self) -> "ModalState":
        return replace(self, coeffs=self.coeffs.copy())

    @property
    def norm(self) -> float:
        """L2(Omega) norm via Parseval."""
        return float(np.linalg.norm(self.coeffs))

    @property
    def is_1d(self) -> bool:
        return self.coeffs.ndim == 1


def state_1d(
    spec: SpectrumSpec,
    j: int,
    coeffs=None,
    time: float = 0.0,
    shifted: bool = False,
    count: Optional[int] = None,
) -> ModalState:
    """1-D state for cross-mode j.

    ``shifted=False`` gives the plain fourth-order problem (rates
    ``x_eigenvalue``); ``shifted=True`` adds the zeroth-order term so the
    rates are the full cylinder-slice rates.
    """
    n = count if count is not None else spec.K_x
    rates = spec.slice_rates(j, n) if shifted else spec.x_rates(j, n)
    c = np.zeros(n) if coeffs is None else np.asarray(coeffs, dtype=float).copy()
    if c.shape != (n,):
        raise ValueError(f"coefficient shape {c.shape} != ({n},)")
    if not np.all(np.isfinite(c)):
        raise ValueError("modal coefficients must be finite")
    return ModalState(coeffs=c, time=time, spec=spec, rates=rates, j_slice=j)


def state_nd(spec: SpectrumSpec, coeffs=None, time: float = 0.0) -> ModalState:
    """Cylinder state with the full (K_x, J_y) rate matrix."""
    c = (
        np.zeros((spec.K_x, spec.J_y))
        if coeffs is None
        else np.asarray(coeffs, dtype=float).copy()
    )
    if c.shape != (spec.K_x, spec.J_y):
        raise ValueError(f"coefficient shape {c.shape} != ({spec.K_x}, {spec.J_y})")
    if not np.all(np.isfinite(c)):
        raise ValueError("modal coefficients must be finite")
    return ModalState(coeffs=c, time=time, spec=spec, rates=spec.rate_matrix())


@dataclass
class Trace:
    """Recorded (t, coeffs) samples of an evolution."""

    times: np.ndarray
    coeffs: np.ndarray  # (n, *state_shape)

    def norms(self) -> np.ndarray:
        axes = tuple(range(1, self.coeffs.ndim))
        return np.sqrt(np.sum(self.coeffs**2, axis=axes))

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.coeffs[i]


@dataclass
class ModalSource:
    """Piecewise-linear-in-time modal source f(t) with the state's shape."""

    times: np.ndarray
    values: np.ndarray

    def pair_at(self, t0: float, t1: float):
        """Endpoint values of f on [t0, t1] assuming no interior breakpoints."""
        return self.value_at(t0), self.value_at(t1)

    def value_at(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        i = int(np.searchsorted(ts, t, side="right") - 1)
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


# ---------------------------------------------------------------------------
# gains
# ---------------------------------------------------------------------------

def boundary_gain_x(spec: SpectrumSpec, count: Optional[int] = None) -> np.ndarray:
    """x-modal gain of the boundary input: S_BOUNDARY sqrt(2/a) k pi / a."""
    n = count if count is not None else spec.K_x
    ks = np.arange(1, n + 1, dtype=float)
    return S_BOUNDARY * math.sqrt(2.0 / spec.a_float) * ks * math.pi / spec.a_float


def pointwise_gain_x(spec: SpectrumSpec, x0: float, count: Optional[int] = None) -> np.ndarray:
    """x-modal gain of the point source: sqrt(2/a) sin(k pi x0 / a)."""
    n = count if count is not None else spec.K_x
    ks = np.arange(1, n + 1, dtype=float)
    return math.sqrt(2.0 / spec.a_float) * np.sin(ks * math.pi * x0 / spec.a_float)


def _control_gain(state: ModalState, control: ControlSignal):
    """(x_gain, mass) so the modal forcing is outer(x_gain, mass.T @ w(t)).

    For 1-D states mass is None and the forcing is x_gain * w(t).
    """
    spec = state.spec
    n = state.coeffs.shape[0]
    if control.kind == "boundary_1d":
        return boundary_gain_x(spec, n), None
    if control.kind == "pointwise_1d":
        return pointwise_gain_x(spec, control.x0, n), None
    if control.kind == "boundary_nd":
        return boundary_gain_x(spec, n), control.mass
    if control.kind == "pointwise_nd":
        return pointwise_gain_x(spec, control.x0, n), control.mass
    raise ValueError(f"unknown control kind {control.kind}")


def _forcing_from_rows(x_gain, mass, row_values):
    """Map row coefficients (R,) to the modal forcing array."""
    if mass is None:
        return x_gain * row_values
    return np.outer(x_gain, mass.T @ row_values)


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------

def evolve_free(state: ModalState, dt: float) -> ModalState:
    """Exact diagonal flow over dt >= 0."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0.0:
        return state.copy()
    new = state.copy()
    new.coeffs = state.coeffs * np.exp(state.rates * dt)
    new.time = state.time + dt
    return new


def _breakpoints(t0, t1, control, source, record):
    pts = {t0, t1}
    if control is not None:
        if control.is_analytic:
            for seg in control.segments:
                pts.add(seg.t0)
                pts.add(seg.t1)
        else:
            for g in control.grid:
                pts.add(float(g))
    if source is not None:
        for t in source.times:
            pts.add(float(t))
    if record is not None:
        for t in record:
            pts.add(float(t))
    arr = np.array(sorted(p for p in pts if t0 - 1e-14 <= p <= t1 + 1e-14))
    arr[0], arr[-1] = t0, t1
    keep = np.concatenate([[True], np.diff(arr) > 1e-14])
    return arr[keep]


def _step_exact(state, t0, t1, control, x_gain, mass, source):
    """One exact update over [t0, t1] with no interior breakpoints."""
    delta = t1 - t0
    lam = state.rates
    grow = np.exp(lam * delta)
    new_coeffs = state.coeffs * grow

    if control is not None:
        flat = lam.ravel()
        if control.is_analytic:
            seg = control._segment_for(0.5 * (t0 + t1))
            duh = seg.mode_duhamel(flat, t0, t1)  # (M,) or (M, R)
            if duh.ndim == 1:
                new_coeffs += duh.reshape(lam.shape) * _axis_gain(x_gain, lam.shape)
            else:
                duh3 = duh.reshape(lam.shape + (duh.shape[1],))
                contrib = np.einsum("kjr,rj->kj", duh3, mass)
                new_coeffs += contrib * x_gain[:, None]
        else:
            z = lam * delta
            if control.quadrature == PIECEWISE_CONSTANT:
                idx = int(np.clip(np.searchsorted(control.grid, 0.5 * (t0 + t1), side="right") - 1,
                                  0, len(control.values) - 1))
                w = control.values[idx]
                F = _forcing_from_rows(x_gain, mass, np.atleast_1d(w))
                if F.shape != lam.shape:
                    F = F.reshape(lam.shape)
                new_coeffs += delta * phi1(z) * F
            else:
                w0 = control.value_at(t0)
                w1 = control.value_at(t1)
                F0 = _forcing_from_rows(x_gain, mass, np.atleast_1d(w0)).reshape(lam.shape)
                F1 = _forcing_from_rows(x_gain, mass, np.atleast_1d(w1)).reshape(lam.shape)
                new_coeffs += delta * phi1(z) * F0 + delta * phi2(z) * (F1 - F0)

    if source is not None:
        f0, f1 = source.value_at(t0), source.value_at(t1)
        z = lam * delta
        new_coeffs += delta * phi1(z) * f0 + delta * phi2(z) * (f1 - f0)

    out = state.copy()
    out.coeffs = new_coeffs
    out.time = t1
    return out


def _axis_gain(x_gain, shape):
    if len(shape) == 1:
        return x_gain
    return x_gain[:, None]


def evolve_controlled(
    state: ModalState,
    control: Optional[ControlSignal],
    window: tuple,
    source: Optional[ModalSource] = None,
    record: Optional[Sequence[float]] = None,
):
    """Evolve over ``window`` under control and/or source, exactly per piece.

    Returns the end state, or ``(state, Trace)`` when ``record`` times are
    given.  The control grid (or analytic segments) must cover the window.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not math.isclose(t0, state.time, rel_tol=0, abs_tol=1e-10):
        raise ValueError(f"window start {t0} != state time {state.time}")
    if control is not None:
        if control.t_start > t0 + 1e-12 or control.t_end < t1 - 1e-12:
            raise ValueError("control grid does not cover the window")
        x_gain, mass = _control_gain(state, control)
    else:
        x_gain, mass = None, None

    pts = _breakpoints(t0, t1, control, source, record)
    rec_t, rec_c = [], []
    want = np.array(sorted(set(float(t) for t in record))) if record is not None else None

    cur = state
    if want is not None and np.any(np.isclose(want, t0, atol=1e-12)):
        rec_t.append(t0)
        rec_c.append(cur.coeffs.copy())
    for a, b in zip(pts[:-1], pts[1:]):
        cur = _step_exact(cur, a, b, control, x_gain, mass, source)
        if want is not None and np.any(np.isclose(want, b, atol=1e-12)):
            rec_t.append(b)
            rec_c.append(cur.coeffs.copy())
    if record is None:
        return cur
    return cur, Trace(times=np.array(rec_t), coeffs=np.array(rec_c))


def evolve_boundary_controlled(state, control, window, **kw):
    """Controlled evolution through the boundary input.

    Refuses Critical/Near parameters: at a rate collision no boundary
    control acts on the invariant two-mode subspace, so controlled-solve
    claims would be vacuous (free flow remains available).
    """
    from .spectrum import require_clear

    if control.kind not in ("boundary_1d", "boundary_nd"):
        raise ValueError("expected a boundary control signal")
    require_clear(state.spec)
    return evolve_controlled(state, control, window, **kw)


def evolve_pointwise_controlled(state, control, window, **kw):
    from .spectrum import require_clear

    if control.kind not in ("pointwise_1d", "pointwise_nd"):
        raise ValueError("expected a pointwise control signal")
    if control.x0 is None or not (0.0 < control.x0 < state.spec.a_float):
        raise ValueError("x0 must lie inside (0, a)")
    require_clear(state.spec)
    return evolve_controlled(state, control, window, **kw)


# ---------------------------------------------------------------------------
# adjoint and observations
# ---------------------------------------------------------------------------

def adjoint_solution(phi_T: np.ndarray, t: float, T: float, rates: np.ndarray) -> np.ndarray:
    """phi(t) = exp(rates (T - t)) phi_T for 0 <= t <= T."""
    if not 0.0 <= t <= T + 1e-12:
        raise ValueError("need 0 <= t <= T")
    return np.asarray(phi_T) * np.exp(rates * (T - t))


def boundary_observation(coeffs: np.ndarray, spec: SpectrumSpec):
    """d/dx at x=0: scalar in 1-D, y-modal row on the cylinder."""
    n = coeffs.shape[0]
    w = math.sqrt(2.0 / spec.a_float) * np.arange(1, n + 1) * math.pi / spec.a_float
    if coeffs.ndim == 1:
        return float(w @ coeffs)
    return w @ coeffs


def point_observation(coeffs: np.ndarray, spec: SpectrumSpec, x0: float):
    """Value at x = x0: scalar in 1-D, y-modal row on the cylinder."""
    n = coeffs.shape[0]
    ks = np.arange(1, n + 1, dtype=float)
    w = math.sqrt(2.0 / spec.a_float) * np.sin(ks * math.pi * x0 / spec.a_float)
    if coeffs.ndim == 1:
        return float(w @ coeffs)
    return w @ coeffs


def observe(trace: Trace, spec: SpectrumSpec, x0: Optional[float] = None):
    """Boundary and (optionally) point observation series along a trace."""
    out = {"t": trace.times, "norm": trace.norms()}
    out["boundary"] = np.array([boundary_observation(c, spec) for c in trace.coeffs])
    if x0 is not None:
        out["point"] = np.array([point_observation(c, spec, x0) for c in trace.coeffs])
    return out


# ---------------------------------------------------------------------------
# projection of initial data
# ---------------------------------------------------------------------------

def _gauss_nodes(n: int, length: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * length * (x + 1.0), 0.5 * length * w


def project_initial(
    u0,
    spec: SpectrumSpec,
    n_points: Optional[int] = None,
) -> ModalState:
    """Modal coefficients of initial data on the cylinder.

    ``u0`` may be a coefficient array (passed through) or a callable
    ``u0(x, *y)``; callables are integrated against the orthonormal basis by
    tensor Gauss-Legendre quadrature with at least 4 points per wavelength of
    the highest retained mode (>= 2 K points per axis).
    """
    if not callable(u0):
        return state_nd(spec, np.asarray(u0, dtype=float))
    if spec.mu_tuples is None:
        raise ValueError("callable projection needs a Box cross-section")
    from .spectrum import _dim_float

    bvals = [_dim_float(b) for b in spec.cross_section.dims]
    max_m = [max(t[i] for t in spec.mu_tuples) for i in range(len(bvals))]

    nx = n_points if n_points is not None else max(4 * spec.K_x, 48)
    if nx < 2 * spec.K_x:
        raise QuadratureUnderResolved(
            f"{nx} x-points < 2 K_x = {2 * spec.K_x} (4 points per wavelength rule)"
        )
    xs, wx = _gauss_nodes(nx, spec.a_float)
    Sx = math.sqrt(2.0 / spec.a_float) * np.sin(
        np.outer(np.arange(1, spec.K_x + 1), xs) * math.pi / spec.a_float
    )

    y_nodes, y_weights, Sy_axes = [], [], []
    for b, mm in zip(bvals, max_m):
        ny = n_points if n_points is not None else max(4 * mm, 48)
        if ny < 2 * mm:
            raise QuadratureUnderResolved(f"{ny} y-points < 2 max_m = {2 * mm}")
        ys, wy = _gauss_nodes(ny, b)
        y_nodes.append(ys)
        y_weights.append(wy)
        Sy_axes.append(
            math.sqrt(2.0 / b) * np.sin(np.outer(np.arange(1, mm + 1), ys) * math.pi / b)
        )

    grids = np.meshgrid(xs, *y_nodes, indexing="ij")
    vals = u0(*grids)
    # x-contraction first
    partial = np.tensordot(Sx * wx[None, :], vals, axes=([1], [0]))  # (K_x, ny...)
    coeffs = np.zeros((spec.K_x, spec.J_y))
    for jj, tup in enumerate(spec.mu_tuples):
        block = partial
        for axis, (m_i, Sy, wy) in enumerate(zip(tup, Sy_axes, y_weights)):
            row = Sy[m_i - 1] * wy
            block = np.tensordot(block, row, axes=([1], [0]))
        coeffs[:, jj] = block
    return state_nd(spec, coeffs)


# ---------------------------------------------------------------------------
# nonlinear term
# ---------------------------------------------------------------------------

def _midpoint_nodes(n: int, length: float):
    return (np.arange(n) + 0.5) * length / n, np.full(n, length / n)


def _sine_projection_matrix(K: int, length: float, nodes: np.ndarray, weights: np.ndarray):
    """Exact projection of cosine-polynomial grid data onto orthonormal sines.

    |grad u|^2 is a pure cosine polynomial of degree <= 2K per axis, so its
    cosine coefficients come out exactly from the midpoint rule (which kills
    cos(m x) sums for 0 < m < 2 n), and the sine-basis projection follows from
    the closed form int_0^L cos(m pi x/L) sin(k pi x/L) dx
    = (L/pi) k (1 - (-1)^{k+m}) / (k^2 - m^2).
    """
    M = 2 * K
    m = np.arange(0, M + 1)
    Dc = np.cos(np.outer(m, nodes) * math.pi / length) * weights[None, :] * (2.0 / length)
    Dc[0] *= 0.5
    ks = np.arange(1, K + 1)
    kk = ks[:, None].astype(float)
    mm = m[None, :].astype(float)
    odd = (ks[:, None] + m[None, :]) % 2 == 1
    denom = np.where(odd, kk * kk - mm * mm, 1.0)
    B = np.where(odd, 2.0 * kk / denom, 0.0)
    B *= (length / math.pi) * math.sqrt(2.0 / length)
    return B @ Dc  # (K, n)


def nonlinear_rhs(state: ModalState, grid_resolution: Optional[int] = None) -> np.ndarray:
    """Projection of -1/2 |grad u|^2 onto the retained sine basis.

    Pseudospectral on a tensor midpoint grid.  The squared gradient is a pure
    cosine polynomial of degree <= 2K per axis, so with >= 2K + 1 points per
    axis its retained projection is computed without aliasing error.
    """
    spec = state.spec
    if state.is_1d:
        raise ValueError("nonlinear term is defined on the cylinder (use state_nd)")
    if spec.mu_tuples is None:
        raise ValueError("nonlinear term needs a Box cross-section")
    from .spectrum import _dim_float

    bvals = [_dim_float(b) for b in spec.cross_section.dims]
    max_m = [max(t[i] for t in spec.mu_tuples) for i in range(len(bvals))]

    nx = grid_resolution if grid_resolution is not None else 2 * spec.K_x + 2
    if nx < 2 * spec.K_x:
        raise QuadratureUnderResolved(f"{nx} grid points < 2 K_x = {2 * spec.K_x}")
    xs, wx = _midpoint_nodes(nx, spec.a_float)
    ks = np.arange(1, spec.K_x + 1)
    argx = np.outer(ks, xs) * math.pi / spec.a_float
    Sx = math.sqrt(2.0 / spec.a_float) * np.sin(argx)
    Cx = math.sqrt(2.0 / spec.a_float) * (ks[:, None] * math.pi / spec.a_float) * np.cos(argx)

    axes = []
    for b, mm in zip(bvals, max_m):
        ny = grid_resolution if grid_resolution is not None else 2 * mm + 2
        if ny < 2 * mm:
            raise QuadratureUnderResolved(f"{ny} grid points < 2 max_m = {2 * mm}")
        ys, wy = _midpoint_nodes(ny, b)
        ms = np.arange(1, mm + 1)
        arg = np.outer(ms, ys) * math.pi / b
        S = math.sqrt(2.0 / b) * np.sin(arg)
        C = math.sqrt(2.0 / b) * (ms[:, None] * math.pi / b) * np.cos(arg)
        axes.append({"S": S, "C": C, "w": wy, "n": ny})

    tuples = spec.mu_tuples
    n_cross = len(bvals)
    U = state.coeffs  # (K_x, J_y)

    # y-plane sample matrices: P0 value, Pd[i] the d/dy_i derivative
    def y_matrix(deriv_axis: Optional[int]):
        cols = []
        for tup in tuples:
            row = None
            for axis, m_i in enumerate(tup):
                mat = axes[axis]["C"] if deriv_axis == axis else axes[axis]["S"]
                vec = mat[m_i - 1]
                row = vec if row is None else np.multiply.outer(row, vec)
            cols.append(row.ravel())
        return np.array(cols)  # (J_y, prod ny)

    P0 = y_matrix(None)
    grad_sq = None
    # d/dx part
    ux = Cx.T @ (U @ P0)  # (nx, NY)
    grad_sq = ux * ux
    for axis in range(n_cross):
        Pd = y_matrix(axis)
        uyi = Sx.T @ (U @ Pd)
        grad_sq = grad_sq + uyi * uyi
    f = -0.5 * grad_sq  # (nx, NY)

    proj_x = _sine_projection_matrix(spec.K_x, spec.a_float, xs, wx)  # (K_x, nx)
    # per-y-axis projection matrices, combined per retained tuple
    proj_axes = []
    for b, mm, ax in zip(bvals, max_m, axes):
        nodes, _ = _midpoint_nodes(ax["n"], b)
        proj_axes.append(_sine_projection_matrix(mm, b, nodes, ax["w"]))
    rows = []
    for tup in tuples:
        row = None
        for axis, m_i in enumerate(tup):
            vec = proj_axes[axis][m_i - 1]
            row = vec if row is None else np.multiply.outer(row, vec)
        rows.append(row.ravel())
    proj_y = np.array(rows)            # (J_y, NY)
    return proj_x @ f @ proj_y.T


def evaluate_physical(state: ModalState, nx: int, ny: Sequence[int]):
    """Sample u on a tensor midpoint grid (diagnostics and Parseval checks)."""
    spec = state.spec
    from .spectrum import _dim_float

    bvals = [_dim_float(b) for b in spec.cross_section.dims]
    xs, wx = _midpoint_nodes(nx, spec.a_float)
    Sx = math.sqrt(2.0 / spec.a_float) * np.sin(
        np.outer(np.arange(1, spec.K_x + 1), xs) * math.pi / spec.a_float
    )
    mats, weights = [], []
    for b, n in zip(bvals, ny):
        ys, wy = _midpoint_nodes(n, b)
        mm = max(t[len(mats)] for t in spec.mu_tuples)
        S = math.sqrt(2.0 / b) * np.sin(np.outer(np.arange(1, mm + 1), ys) * math.pi / b)
        mats.append(S)
        weights.append(wy)
    cols = []
    for tup in spec.mu_tuples:
        row = None
        for axis, m_i in enumerate(tup):
            vec = mats[axis][m_i - 1]
            row = vec if row is None else np.multiply.outer(row, vec)
        cols.append(row.ravel())
    P0 = np.array(cols)
    grid_vals = Sx.T @ (state.coeffs @ P0)
    wy_full = weights[0]
    for w in weights[1:]:
        wy_full = np.multiply.outer(wy_full, w)
    return grid_vals, wx, wy_full.ravel()
