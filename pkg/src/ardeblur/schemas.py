"""Iterative refinement of the one-step deconvolution estimate.

Four schemas share a convergence monitor:

- lr: multiplicative ratio updates (with a dual kernel update available);
- lrme: additive updates with a kernel self-convolution data term and a
  scalar regularization weight;
- bvdr: additive updates whose weight follows a balance recursion driven by
  the successive variations of the iterate (rises during a transition
  period, then decays);
- cs: additive updates with a pointwise weight field, the squared data
  residual scaled by the surface metric determinant.

The monitor records per-step residuals, weights, the residual ratio, and
the relaxation-bound diagnostics; it stops on small residuals, on loss of
monotonicity after the transition window, or at the iteration cap.
"""
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .image import as_kernel, as_plane, mean_abs, mean_sq, normalize_psf
from .ops import (SAF, BoundaryMode, Regularizer, conv_full, conv_same,
                  correlate_adjoint, metric_det, saf_operator)
from . import backend

__all__ = [
    "SchemaConfig", "StepRecord", "ConvergenceTrace", "LambdaState",
    "SchemaDivergenceError", "lr_step", "lr_psf_update", "lrme_step",
    "dynamic_lambda", "cs_lambda_field", "cs_optimal_estimate",
    "monitor_step", "bvdr_run", "cs_run", "run_schema",
]

_DEFAULT_CAPS = {"lr": 100, "lrme": 10, "bvdr": 10, "cs": 10}

# upper bound for the dt * max|step| diagnostic quoted for relaxation tuning
DT_UPPER_LIMIT = 0.01


class SchemaDivergenceError(RuntimeError):
    """Iterate went non-finite; carries the trace collected so far."""

    def __init__(self, trace):
        super().__init__("schema iterate diverged (non-finite values)")
        self.trace = trace


@dataclass(frozen=True)
class SchemaConfig:
    """Parameters shared by the iterative schemas.

    regularizer None switches the smoothing term off entirely (then bvdr
    forces its weight to zero and cs zeroes the weight field's operator).
    lambda0 seeds the lrme weight; bvdr always derives its own starting
    weight. q is the transition window during which the monotonicity stop
    is suspended. max_iters None resolves to the per-schema default
    (lr 100, others 10).
    """
    schema: str = "cs"
    dt: float = 1.0
    lambda0: float = None
    regularizer: Regularizer = SAF
    q: int = 5
    theta: float = 1.0
    eps: float = 1e-8
    max_iters: int = None
    zero_guard: float = 1e-6
    lambda_cap: float = 1e3
    enforce_dt_bounds: bool = False

    def __post_init__(self):
        if self.schema not in _DEFAULT_CAPS:
            raise ValueError(f"unknown schema {self.schema!r}")
        if not (self.dt > 0):
            raise ValueError("dt must be > 0")
        if not (self.eps > 0):
            raise ValueError("eps must be > 0")
        if self.theta < 1:
            raise ValueError("theta must be >= 1")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.q < 0:
            raise ValueError("q must be >= 0")

    def resolved_cap(self):
        return self.max_iters if self.max_iters is not None else _DEFAULT_CAPS[self.schema]


@dataclass
class StepRecord:
    k: int
    residual_msq: float
    lambda_k: float
    theta_k: float
    dt_lower: float
    dt_upper_metric: float


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)
    stop_reason: str = None

    def to_json_obj(self):
        return {
            "records": [vars(r) for r in self.records],
            "stop_reason": self.stop_reason,
        }

    def to_csv_text(self):
        lines = ["k,residual_msq,lambda,theta,dt_lower,dt_upper_metric"]
        for r in self.records:
            lines.append(f"{r.k},{r.residual_msq:.17g},{r.lambda_k:.17g},"
                         f"{r.theta_k:.17g},{r.dt_lower:.17g},{r.dt_upper_metric:.17g}")
        return "\n".join(lines) + "\n"


@dataclass
class LambdaState:
    """Carries the weight recursion between steps."""
    lambda_prev: float = 0.0
    s_prev: np.ndarray = None
    reg_prev: np.ndarray = None
    degenerate: bool = False


def lr_step(s, x, h, guard=1e-6):
    """One multiplicative update: s * adj_h(x / max(h*s, guard)).

    The correction factor is convolved with the flipped kernel (the adjoint
    direction), the classical form; output stays nonnegative for
    nonnegative inputs and kernel.
    """
    denom = conv_same(s, h, BoundaryMode.REPLICATE)
    ratio = x / np.maximum(denom, guard)
    return s * correlate_adjoint(ratio, h, BoundaryMode.REPLICATE)


def lr_psf_update(s, x, h, guard=1e-6):
    """Dual multiplicative update of the kernel on its own support.

    The pixel ratio x / max(h*s, guard) is averaged against windows of s
    (a weighted mean per kernel offset, so an exact fixture with ratio 1
    returns the kernel unchanged); the result is renormalized to unit sum.
    """
    s = as_plane(s)
    h = as_kernel(h)
    l, m = h.shape
    denom = conv_same(s, h, BoundaryMode.REPLICATE)
    ratio = x / np.maximum(denom, guard)
    hh, ww = s.shape
    mr, mc = l - 1, m - 1
    if hh - 2 * mr < 1 or ww - 2 * mc < 1:
        raise ValueError(f"image {hh}x{ww} too small for {l}x{m} kernel update")
    num = backend.windowed_cross(s, ratio, l, m, mr, hh - mr, mc, ww - mc)
    den = backend.windowed_cross(s, np.ones_like(s), l, m, mr, hh - mr, mc, ww - mc)
    floor = max(float(den.max()) * 1e-15, 1e-300)
    corr = num / np.maximum(den, floor)
    return normalize_psf(h * corr.reshape(l, m))


def lrme_step(s, x, h, lam, reg, dt):
    """One additive update: s + dt*(h*x - (h*h)*s + lam*L(s))."""
    hh = conv_full(h, h)
    hx = conv_same(x, h, BoundaryMode.REPLICATE)
    hhs = conv_same(s, hh, BoundaryMode.REPLICATE)
    r = reg.apply(s) if reg is not None else 0.0
    return s + dt * (hx - hhs + lam * r)


def dynamic_lambda(state, s_cur, x, h, g, reg, dt, k, lambda_cap=1e3):
    """Balance recursion for the regularization weight.

    k = 0 seeds the weight from the initial estimate and the observed image;
    later steps update it from the successive variations of the iterate and
    of the smoothing field. All averages are means of absolute values of the
    named convolved fields, so the weight stays nonnegative; it is clamped
    to [0, lambda_cap]. A vanishing denominator (mean below 1e-14) returns
    weight 0 with the state's degenerate flag set.

    Returns (lambda_k, new_state); state None is an empty start.
    """
    if state is None:
        state = LambdaState()
    if reg is None:
        raise ValueError("dynamic weight needs a regularizer")
    reg_cur = reg.apply(s_cur)
    den_mean = mean_abs(conv_same(reg_cur, g, BoundaryMode.REPLICATE))
    denominator = dt * den_mean
    if den_mean < 1e-14:
        return 0.0, LambdaState(lambda_prev=0.0, s_prev=s_cur, reg_prev=reg_cur,
                                degenerate=True)
    if k == 0 or state.s_prev is None:
        num = mean_abs(conv_same(s_cur - x, h, BoundaryMode.REPLICATE)) / denominator
        arg = mean_abs(conv_same(reg_cur - reg.apply(x), g, BoundaryMode.REPLICATE)) / denominator
        growth = math.expm1(arg) if arg < 700 else math.inf
        if growth <= 0.0 or not math.isfinite(growth):
            lam = 0.0 if not math.isfinite(growth) else 0.0
            degen = True
        else:
            lam = num / growth
            degen = False
    else:
        num = mean_abs(conv_same(s_cur - state.s_prev, h, BoundaryMode.REPLICATE)) / denominator
        arg = mean_abs(conv_same(reg_cur - state.reg_prev, g, BoundaryMode.REPLICATE)) / denominator
        lam = (state.lambda_prev + num) * math.exp(-min(arg, 700.0))
        degen = False
    lam = float(min(max(lam, 0.0), lambda_cap))
    return lam, LambdaState(lambda_prev=lam, s_prev=s_cur, reg_prev=reg_cur,
                            degenerate=degen)


def cs_lambda_field(s, x, h):
    """Pointwise weight field: squared data residual over twice the metric
    determinant; zero exactly where the residual is zero."""
    res = x - conv_same(s, h, BoundaryMode.REPLICATE)
    return res * res / (2.0 * metric_det(s))


def monitor_step(trace, s_next, s_cur, s_prev, cfg, lambda_k=math.nan,
                 dt_lower=math.nan, dt_upper=math.nan):
    """Record one step and decide whether to stop.

    Returns None to continue, else one of 'non_finite', 'eps_reached',
    'monotonicity_violated', 'dt_bound_violated', 'iter_cap'. The
    monotonicity test (residual ratio against cfg.theta) is suspended for
    the first cfg.q steps, the transition window.
    """
    k = len(trace.records)
    d = mean_sq(s_next - s_cur)
    d_prev = mean_sq(s_cur - s_prev)
    if d_prev > 0:
        theta_k = d / d_prev
    else:
        theta_k = math.inf if d > 0 else 1.0
    trace.records.append(StepRecord(k=k, residual_msq=d, lambda_k=lambda_k,
                                    theta_k=theta_k, dt_lower=dt_lower,
                                    dt_upper_metric=dt_upper))
    if not (math.isfinite(d) and np.all(np.isfinite(s_next))):
        return "non_finite"
    if d < cfg.eps:
        return "eps_reached"
    if k >= cfg.q and d * cfg.theta > d_prev:
        return "monotonicity_violated"
    if cfg.enforce_dt_bounds:
        if (math.isfinite(dt_lower) and cfg.dt < dt_lower) or \
                (math.isfinite(dt_upper) and dt_upper > DT_UPPER_LIMIT):
            return "dt_bound_violated"
    if k + 1 >= cfg.resolved_cap():
        return "iter_cap"
    return None


def run_schema(x, h, g, cfg):
    """Run the configured schema from its canonical start.

    lr starts from the observed image; the additive schemas start from the
    one-step estimate g * x. Returns (final plane, ConvergenceTrace); a
    non-finite iterate raises SchemaDivergenceError carrying the trace.
    """
    x = as_plane(x)
    h = as_kernel(h)
    if cfg.schema != "lr":
        g = as_kernel(g)
    if cfg.schema == "lr":
        s = x.copy()
    else:
        s = conv_same(x, g, BoundaryMode.REPLICATE)
    s_prev = x
    trace = ConvergenceTrace()
    state = None
    cap = cfg.resolved_cap()
    for k in range(cap):
        if cfg.schema == "lr":
            lam_k = math.nan
            s_next = lr_step(s, x, h, cfg.zero_guard)
        elif cfg.schema == "lrme":
            lam_k, state = _next_lambda(state, s, x, h, g, cfg, k)
            s_next = lrme_step(s, x, h, lam_k, cfg.regularizer, cfg.dt)
        elif cfg.schema == "bvdr":
            lam_k, state = _next_lambda(state, s, x, h, g, cfg, k)
            reg_field = (conv_same(cfg.regularizer.apply(s), g, BoundaryMode.REPLICATE)
                         if cfg.regularizer is not None else 0.0)
            s_next = s + cfg.dt * (x - conv_same(s, h, BoundaryMode.REPLICATE)
                                   + lam_k * reg_field)
        else:  # cs
            lam_field = cs_lambda_field(s, x, h)
            lam_k = mean_abs(lam_field)
            if cfg.regularizer is None:
                reg_field = 0.0
            else:
                reg_field = conv_same(lam_field * saf_operator(s), g,
                                      BoundaryMode.REPLICATE)
            s_next = s + cfg.dt * (x - conv_same(s, h, BoundaryMode.REPLICATE)
                                   + reg_field)
        dt_lower, dt_upper = _relaxation_bounds(s_next, s, cfg.dt)
        decision = monitor_step(trace, s_next, s, s_prev, cfg, lambda_k=lam_k,
                                dt_lower=dt_lower, dt_upper=dt_upper)
        s_prev, s = s, s_next
        if decision == "non_finite":
            trace.stop_reason = decision
            raise SchemaDivergenceError(trace)
        if decision is not None:
            trace.stop_reason = decision
            break
    return s, trace


def bvdr_run(x, h, g, cfg=None):
    """Balanced-variation run; see run_schema."""
    cfg = replace(cfg, schema="bvdr") if cfg is not None else SchemaConfig(schema="bvdr", dt=0.1)
    return run_schema(x, h, g, cfg)


def cs_run(x, h, g, cfg=None):
    """Metric-weighted (curved-space) run; see run_schema."""
    cfg = replace(cfg, schema="cs") if cfg is not None else SchemaConfig(schema="cs", dt=1.0)
    return run_schema(x, h, g, cfg)


def cs_optimal_estimate(s, delta_s, x, g, dt):
    """Terminal-report estimate of the functional's minimum neighborhood.

    Reblurs x minus the square root of 2*sigma/L(s) * delta_s/dt with the
    inverse kernel; the root argument is zeroed where negative or
    non-finite. Reporting only, never fed back into the iteration.
    """
    sigma = metric_det(s)
    lsig = saf_operator(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        core = 2.0 * sigma / lsig * (delta_s / dt)
    core = np.where(np.isfinite(core), core, 0.0)
    root = np.sqrt(np.maximum(core, 0.0))
    return conv_same(x - root, g, BoundaryMode.REPLICATE)


def _next_lambda(state, s, x, h, g, cfg, k):
    """Dynamic weight; lrme may seed step 0 from cfg.lambda0."""
    if cfg.regularizer is None:
        return 0.0, state
    if k == 0 and cfg.schema == "lrme" and cfg.lambda0 is not None:
        # seeded start: skip the derived initial weight, prime the recursion
        reg_cur = cfg.regularizer.apply(s)
        lam = float(min(max(cfg.lambda0, 0.0), cfg.lambda_cap))
        return lam, LambdaState(lambda_prev=lam, s_prev=s, reg_prev=reg_cur)
    return dynamic_lambda(state, s, x, h, g, cfg.regularizer, cfg.dt, k,
                          lambda_cap=cfg.lambda_cap)


def _relaxation_bounds(s_next, s_cur, dt):
    """(lower bound on dt, dt * max step) recorded per iteration."""
    step = s_next - s_cur
    den = mean_abs(saf_operator(s_cur))
    num = mean_abs(step)
    if den > 0:
        dt_lower = num / den
    else:
        dt_lower = math.inf if num > 0 else 0.0
    dt_upper = dt * float(np.max(np.abs(step))) if step.size else 0.0
    return dt_lower, dt_upper
