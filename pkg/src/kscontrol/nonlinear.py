"""Local null control of the nonlinear equation by the source-term method.

The quadratic term enters as a source: with F(u) the modal projection of
-1/2 |grad u|^2, the controlled-linear-with-source solver steers
u' = Lambda u + control + f to rest, and the Picard iteration
f^(n+1) = F(u^(n)) closes the loop.  At a fixed point the pair (u, q)
satisfies the nonlinear equation, which an independent exponential
time-differencing simulation then verifies.

Weights: rho_0(t) = exp(-p C / ((q-1)(T-t))) on the state/control and
rho_F(t) = exp(-(1+p) q^2 C / ((q-1)(T-t))) on the source, with
1 < q < sqrt(2) and p > q^2/(2-q^2) so that rho_0^2 = o(rho_F): quadratic
images of weighted-bounded states stay weighted-bounded.  C is the control
cost constant; it is not derivable from theory alone here, so the module
takes the empirical value fitted from frequency-splitting runs
(`fit_cost_constant`).  The weights shape the norms in which contraction is
measured and reported; the Picard map itself does not depend on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NoContraction, StepUnconverged, WeightUnderflow
from .lebeau_robbiano import BoundaryGamma, LRRunResult, run_lr
from .modal import ModalSource, Trace, evolve_controlled, nonlinear_rhs, state_nd
from .spectrum import SpectrumSpec, require_clear

WEIGHT_FLOOR = 1e-280
VALUE_FLOOR = 1e-200
#: weights below this are dominated by the truncation's kill residual, so
#: weighted metrics are evaluated only where rho >= EVAL_FLOOR
EVAL_FLOOR = 1e-30
DEFAULT_Q = 1.2
DEFAULT_C_COST = 0.5


def default_p(q_w: float = DEFAULT_Q, headroom: float = 0.2) -> float:
    """p a fixed fraction above the threshold q^2/(2-q^2)."""
    return (1.0 + headroom) * q_w**2 / (2.0 - q_w**2)


@dataclass
class WeightPair:
    """Vanishing weights of the source-term scheme on [0, T]."""

    T: float
    p: float = field(default_factory=default_p)
    q_w: float = DEFAULT_Q
    C_cost: float = DEFAULT_C_COST

    def __post_init__(self):
        if not 1.0 < self.q_w < math.sqrt(2.0):
            raise ValueError(f"q_w={self.q_w} outside (1, sqrt(2))")
        threshold = self.q_w**2 / (2.0 - self.q_w**2)
        if not self.p > threshold:
            raise ValueError(f"p={self.p} must exceed q^2/(2-q^2) = {threshold:.4g}")
        if self.C_cost <= 0:
            raise ValueError("C_cost must be positive")

    def rho0(self, t):
        return self._weight(t, self.p * self.C_cost / (self.q_w - 1.0))

    def rhoF(self, t):
        return self._weight(t, (1.0 + self.p) * self.q_w**2 * self.C_cost / (self.q_w - 1.0))

    def _weight(self, t, coef):
        tt = np.asarray(t, dtype=float)
        out = np.zeros_like(tt)
        inside = tt < self.T
        arg = np.where(inside, coef / np.maximum(self.T - tt, 1e-300), np.inf)
        out = np.where(inside & (arg < 700.0), np.exp(-np.minimum(arg, 700.0)), 0.0)
        return out if np.ndim(t) else float(out)

    def safe_horizon(self) -> float:
        """Largest t for which rho_F stays above the representable floor."""
        coef = (1.0 + self.p) * self.q_w**2 * self.C_cost / (self.q_w - 1.0)
        return self.T - coef / (-math.log(WEIGHT_FLOOR))


def fit_cost_constant(spec: SpectrumSpec, geometry=None, T_grid=(0.25, 0.5, 1.0),
                      rho: float = 0.5, beta: Optional[int] = None) -> dict:
    """Fit log total control norm ~ C / T over frequency-splitting runs.

    Worst case over the first few basis modes; the slope is the empirical
    control cost constant used in the weights.
    """
    geometry = geometry if geometry is not None else BoundaryGamma(None)
    xs, ys = [], []
    for T in T_grid:
        worst = 0.0
        for (k, j) in [(1, 1), (2, 1), (1, 2)]:
            c = np.zeros((spec.K_x, spec.J_y))
            c[k - 1, j - 1] = 1.0
            res = run_lr(c, float(T), spec, geometry, rho=rho, beta=beta)
            worst = max(worst, res.total_control_norm)
        xs.append(1.0 / T)
        ys.append(math.log(max(worst, 1e-300)))
    A = np.vstack([xs, np.ones_like(xs)]).T
    sol, *_ = np.linalg.lstsq(A, np.array(ys), rcond=None)
    return {"C_hat": float(max(sol[0], 1e-3)), "intercept": float(sol[1]),
            "points": list(zip(xs, ys))}


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------

def _weighted_ratio(values: np.ndarray, weights: np.ndarray):
    """Pointwise value/weight with the 0/0 := 0 convention and underflow guard."""
    out = np.zeros_like(values)
    for i, (v, w) in enumerate(zip(values, weights)):
        if w >= WEIGHT_FLOOR:
            out[i] = v / w
        elif v <= VALUE_FLOOR:
            out[i] = 0.0
        else:
            raise WeightUnderflow(
                f"weight underflowed ({w:.3e}) while the state is alive ({v:.3e})"
            )
    return out


def weighted_norms(trace: Trace, control_norm_series, source: Optional[ModalSource],
                   weights: WeightPair, spec: SpectrumSpec) -> dict:
    """Weighted norms of a controlled trajectory.

    Returns sup_t ||u/rho0||_{L2}, the L2-in-time H-norm of u/rho0 (H = the
    second-order Dirichlet form, computed modally), the weighted control
    norm, and ||f/rhoF|| in the modal dual norm.  ``control_norm_series`` is
    (times, ||q(t)||_{L2(Gamma)}) samples.
    """
    t = trace.times
    rho0 = weights.rho0(t)
    norms = trace.norms()
    sup_ratio = float(np.max(_weighted_ratio(norms, rho0)))

    s = _dirichlet_symbol(spec)
    h_series = np.sqrt(np.sum((trace.coeffs * s[None, :, :]) ** 2, axis=(1, 2)))
    h_ratio = _weighted_ratio(h_series, rho0)
    l2h = math.sqrt(float(np.trapezoid(h_ratio**2, t)))

    ctrl = 0.0
    if control_norm_series is not None:
        ct, cv = control_norm_series
        cr = _weighted_ratio(np.asarray(cv), weights.rho0(np.asarray(ct)))
        ctrl = math.sqrt(float(np.trapezoid(cr**2, ct)))

    src = 0.0
    if source is not None:
        st = source.times
        rhoF = weights.rhoF(st)
        dual = np.sqrt(np.sum((source.values / s[None, :, :]) ** 2, axis=(1, 2)))
        sr = _weighted_ratio(dual, rhoF)
        src = math.sqrt(float(np.trapezoid(sr**2, st)))
    return {
        "sup_state": sup_ratio,
        "l2_H_state": l2h,
        "control": ctrl,
        "source_dual": src,
    }


def _dirichlet_symbol(spec: SpectrumSpec) -> np.ndarray:
    """(kappa_k + mu_j): the modal symbol of the second-order Dirichlet form."""
    ks = np.arange(1, spec.K_x + 1, dtype=float)
    kap = (ks * math.pi / spec.a_float) ** 2
    return kap[:, None] + spec.mus[None, :]


def source_dual_norm(values: np.ndarray, spec: SpectrumSpec) -> float:
    """Modal dual norm ||f||_{H'} of one source snapshot."""
    s = _dirichlet_symbol(spec)
    return float(np.sqrt(np.sum((values / s) ** 2)))


# ---------------------------------------------------------------------------
# controlled solve with source
# ---------------------------------------------------------------------------

def source_grid(T: float, weights: WeightPair, n_bulk: int = 96, n_tail: int = 24) -> np.ndarray:
    """Time grid for source traces: uniform bulk plus a grid graded toward T.

    The graded part stops at the weight-floor horizon (beyond it both the
    source and the weights are numerically dead) and the endpoint T closes
    the grid for the integrator.
    """
    t_safe = weights.safe_horizon()
    bulk_end = min(0.8 * T, t_safe)
    bulk = np.linspace(0.0, bulk_end, n_bulk, endpoint=False)
    tail = []
    gap = T - bulk_end
    for i in range(n_tail):
        gap *= 0.75
        tt = T - gap
        if tt >= t_safe:
            break
        tail.append(tt)
    pts = np.concatenate([bulk, np.array(tail), [t_safe, T]])
    return np.unique(np.round(pts, 12))


@dataclass
class SourceSolveResult:
    lr: LRRunResult
    trace: Trace
    control_norm_series: tuple
    final_rel_norm: float
    weighted: dict = None


def weighted_norms_trimmed(trace, control_norm_series, source, weights, spec) -> dict:
    """Weighted norms evaluated where rho_0 >= EVAL_FLOOR.

    The numerical trajectory only tracks the ideal weighted decay down to the
    truncation's kill residual; beyond the floor the ratios measure that
    residual against an underflowing weight, so they are excluded here (the
    strict calculator `weighted_norms` keeps the literal underflow contract).
    """
    rho0 = weights.rho0(trace.times)
    keep = rho0 >= EVAL_FLOOR
    sub = Trace(times=trace.times[keep], coeffs=trace.coeffs[keep])
    series = None
    if control_norm_series is not None:
        ct, cv = control_norm_series
        ct = np.asarray(ct)
        m = weights.rho0(ct) >= EVAL_FLOOR
        series = (ct[m], np.asarray(cv)[m])
    src = None
    if source is not None:
        m = weights.rhoF(source.times) >= EVAL_FLOOR
        src = ModalSource(times=source.times[m], values=source.values[m])
    return weighted_norms(sub, series, src, weights, spec)


def controlled_solve_with_source(
    u0: np.ndarray,
    source: Optional[ModalSource],
    T: float,
    spec: SpectrumSpec,
    geometry=None,
    rho: float = 0.5,
    beta: Optional[int] = None,
    grid: Optional[np.ndarray] = None,
    weights: Optional[WeightPair] = None,
) -> SourceSolveResult:
    """Null-controlled solve with the source integrated exactly per window.

    Reduces to a plain frequency-splitting run for zero source.  The window
    syntheses target the free-plus-source end state, so the source is
    annihilated along with the state, window by window.
    """
    require_clear(spec)
    geometry = geometry if geometry is not None else BoundaryGamma(None)
    weights = weights if weights is not None else WeightPair(T=T)
    rec = grid if grid is not None else source_grid(T, weights)
    res = run_lr(u0, T, spec, geometry, rho=rho, beta=beta, source=source, record=rec)
    trace = res.trace
    ct = trace.times
    cv = _control_norm_series(res, ct)
    u0n = float(np.linalg.norm(u0))
    weighted = weighted_norms_trimmed(trace, (ct, cv), source, weights, spec)
    return SourceSolveResult(
        lr=res,
        trace=trace,
        control_norm_series=(ct, cv),
        final_rel_norm=res.final_norm / max(u0n, 1e-300),
        weighted=weighted,
    )


def _control_norm_series(res: LRRunResult, times: np.ndarray) -> np.ndarray:
    """||q(t)||_{L2(control region)} sampled along the run's controls."""
    out = np.zeros_like(times)
    for sig in res.controls:
        inside = (times >= sig.t_start - 1e-12) & (times <= sig.t_end + 1e-12)
        if not np.any(inside):
            continue
        vals = sig.value_at(times[inside])
        vals = np.atleast_2d(vals)
        if sig.row_gram is None:
            sq = np.sum(vals**2, axis=1)
        else:
            sq = np.einsum("sr,rq,sq->s", vals, sig.row_gram, vals)
        out[inside] = np.sqrt(np.maximum(sq, 0.0))
    return out


# ---------------------------------------------------------------------------
# the fixed point
# ---------------------------------------------------------------------------

@dataclass
class FixedPointResult:
    converged: bool
    iterations: int
    deltas: list
    ratios: list
    controls: list = field(repr=False, default_factory=list)
    linear_final_rel: float = math.nan
    nonlinear_final_rel: float = math.nan
    nonlinear_norm_series: tuple = field(repr=False, default=None)
    weights: WeightPair = None


def fixed_point(
    u0: np.ndarray,
    T: float,
    spec: SpectrumSpec,
    geometry=None,
    tol: float = 1e-9,
    max_iter: int = 12,
    rho: float = 0.5,
    beta: Optional[int] = None,
    weights: Optional[WeightPair] = None,
    r_guess: Optional[float] = None,
    verify: bool = True,
    sim_steps: int = 1000,
) -> FixedPointResult:
    """Picard iteration f -> F(u(f)) with weighted-norm stopping.

    ``tol`` is relative: the iteration stops once the weighted source
    increment ||(f^(n+1) - f^(n))/rho_F|| falls below tol times the first
    increment (absolute weighted norms are scaled by 1/rho_F and hence
    astronomically large by design).  NoContraction fires after three
    consecutive ratios above 0.9: the data is outside the local regime.  On
    convergence the control is replayed through the independent nonlinear
    simulator.
    """
    require_clear(spec)
    geometry = geometry if geometry is not None else BoundaryGamma(None)
    weights = weights if weights is not None else WeightPair(T=T)
    u0 = np.asarray(u0, dtype=float)
    if r_guess is not None and float(np.linalg.norm(u0)) > r_guess:
        raise NoContraction(
            f"||u0|| = {np.linalg.norm(u0):.3e} exceeds the locality radius {r_guess:.3e}"
        )
    grid = source_grid(T, weights)
    source = None
    prev_f = None
    prev_delta = None
    delta0 = None
    deltas, ratios, bad_streak = [], [], 0
    solve = None
    for n in range(max_iter):
        solve = controlled_solve_with_source(
            u0, source, T, spec, geometry, rho=rho, beta=beta, grid=grid, weights=weights
        )
        f_vals = np.array([nonlinear_rhs(state_nd(spec, c)) for c in solve.trace.coeffs])
        new_source = ModalSource(times=solve.trace.times.copy(), values=f_vals)
        delta = _source_delta(new_source, prev_f, weights, spec)
        deltas.append(delta)
        if delta0 is None:
            delta0 = delta
        if prev_delta is not None and prev_delta > 0:
            ratio = delta / prev_delta
            ratios.append(ratio)
            bad_streak = bad_streak + 1 if ratio > 0.9 else 0
            if bad_streak >= 3:
                raise NoContraction(
                    f"contraction ratios {ratios[-3:]} exceed 0.9 three times: "
                    "initial data outside the local regime"
                )
        if delta0 == 0.0 or delta < tol * delta0:
            source = new_source
            break
        prev_f = new_source
        prev_delta = delta
        source = new_source
    else:
        raise NoContraction(f"no convergence in {max_iter} iterations (deltas {deltas[-3:]})")

    nonlinear_rel = math.nan
    norm_series = None
    if verify:
        sim = nonlinear_simulate(u0, solve.lr.controls, T, spec, n_steps=sim_steps)
        nonlinear_rel = sim["final_rel_norm"]
        norm_series = sim["norm_series"]
    return FixedPointResult(
        converged=True,
        iterations=len(deltas),
        deltas=deltas,
        ratios=ratios,
        controls=solve.lr.controls,
        linear_final_rel=solve.final_rel_norm,
        nonlinear_final_rel=nonlinear_rel,
        nonlinear_norm_series=norm_series,
        weights=weights,
    )


def _source_delta(new: ModalSource, old: Optional[ModalSource], weights: WeightPair,
                  spec: SpectrumSpec) -> float:
    """||(f_new - f_old)/rho_F|| on the window where the weight is meaningful.

    Beyond rho_F < EVAL_FLOOR the trajectory sits at the truncation's kill
    residual and the ratio would measure floor noise, not contraction.
    """
    t = new.times
    rhoF = weights.rhoF(t)
    mask = rhoF >= EVAL_FLOOR
    if not np.any(mask):
        return 0.0
    t = t[mask]
    if old is None:
        diff = new.values[mask]
    else:
        old_vals = np.array([old.value_at(ti) for ti in t])
        diff = new.values[mask] - old_vals
    s = _dirichlet_symbol(spec)
    dual = np.sqrt(np.sum((diff / s[None, :, :]) ** 2, axis=(1, 2)))
    ratio = dual / rhoF[mask]
    return math.sqrt(float(np.trapezoid(ratio**2, t)))


def estimate_radius(T: float, spec: SpectrumSpec, geometry=None, scale0: float = 1e-3,
                    n_bisect: int = 6, **kw) -> float:
    """Bisect the largest initial-data scale at which the iteration contracts.

    The probe direction is the lowest tensor mode; existence of a positive
    radius is a theorem, its value is not, hence this runtime search.
    """
    lo, hi = 0.0, None
    s = scale0
    base = np.zeros((spec.K_x, spec.J_y))
    base[0, 0] = 1.0
    for _ in range(40):
        try:
            fixed_point(s * base, T, spec, geometry, verify=False, **kw)
            lo, s = s, s * 4.0
        except NoContraction:
            hi = s
            break
    if hi is None:
        return lo
    for _ in range(n_bisect):
        mid = math.sqrt(lo * hi) if lo > 0 else hi / 4.0
        try:
            fixed_point(mid * base, T, spec, geometry, verify=False, **kw)
            lo = mid
        except NoContraction:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# independent nonlinear simulation
# ---------------------------------------------------------------------------

def nonlinear_simulate(
    u0: np.ndarray,
    controls: Sequence,
    T: float,
    spec: SpectrumSpec,
    n_steps: int = 1000,
    check_halving: bool = True,
) -> dict:
    """Exponential time differencing for the full nonlinear closed loop.

    Linear flow and control enter exactly per step; the quadratic term is
    explicit second-order (predictor/corrector with phi2 weighting).  The
    step count is doubled once and the end states compared; divergence
    beyond 1e-6 relative raises StepUnconverged.
    """
    if n_steps < math.ceil(1.0 / 1e-3):
        n_steps = 1000
    run = _etd_run(u0, controls, T, spec, n_steps)
    if check_halving:
        run2 = _etd_run(u0, controls, T, spec, 2 * n_steps)
        # the end state may sit at the integrator's error floor, so halving
        # convergence is measured against the problem scale ||u0||
        scale = max(float(np.linalg.norm(u0)), run["final_norm"], run2["final_norm"], 1e-300)
        if abs(run["final_norm"] - run2["final_norm"]) > 1e-6 * scale:
            raise StepUnconverged(
                f"final norms {run['final_norm']:.6e} vs {run2['final_norm']:.6e} under halving"
            )
        run = run2
    return run


def _etd_run(u0, controls, T, spec, n_steps):
    from .signals import phi1, phi2

    state = state_nd(spec, np.asarray(u0, dtype=float))
    lam = state.rates
    boundaries = {0.0, T}
    for sig in controls:
        boundaries.add(sig.t_start)
        boundaries.add(sig.t_end)
    base = np.linspace(0.0, T, n_steps + 1)
    grid = np.unique(np.concatenate([base, np.array(sorted(boundaries))]))
    grid = grid[(grid >= 0) & (grid <= T + 1e-15)]

    def control_at(t0, t1):
        for sig in controls:
            if sig.t_start - 1e-12 <= t0 and t1 <= sig.t_end + 1e-12:
                return sig
        return None

    norms = [float(np.linalg.norm(state.coeffs))]
    times = [0.0]
    for t0, t1 in zip(grid[:-1], grid[1:]):
        h = t1 - t0
        if h <= 0:
            continue
        sig = control_at(t0, t1)
        lc = evolve_controlled(state, sig, (t0, t1))
        z = lam * h
        N0 = nonlinear_rhs(state)
        pred = lc.coeffs + h * phi1(z) * N0
        N1 = nonlinear_rhs(state_nd(spec, pred))
        new = lc.coeffs + h * phi1(z) * N0 + h * phi2(z) * (N1 - N0)
        state = state_nd(spec, new, time=t1)
        times.append(t1)
        norms.append(float(np.linalg.norm(new)))
    u0n = max(float(np.linalg.norm(u0)), 1e-300)
    return {
        "final_norm": norms[-1],
        "final_rel_norm": norms[-1] / u0n,
        "final_coeffs": state.coeffs,
        "norm_series": (np.array(times), np.array(norms)),
    }
