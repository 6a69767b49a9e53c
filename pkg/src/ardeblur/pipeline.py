"""End-to-end blind deblurring: stencil fit, kernel extraction, inverse
kernel search, primary estimate, iterative refinement.

The kernel chain runs once on the luminance plane; the resulting kernels
are shared across channels, each of which gets its own primary estimate
and refinement trace. An optional prior-denoise cascade runs first and the
rest of the pipeline consumes its output.
"""
import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import ar, cns, denoise, ipsf, schemas
from .image import Image, as_plane, luminance, mean_abs, ncc, psnr
from .ops import SAF, BoundaryMode, Regularizer, conv_same

__all__ = [
    "ConfigError", "PipelineConfig", "PipelineStageError", "PipelineResult",
    "QualityReport", "config_to_json", "config_from_json", "blind_deblur",
    "evaluate", "trace_json_obj",
]

_SCHEMAS = ("lr", "lrme", "bvdr", "cs", "none")
_REGULARIZERS = ("saf", "tv", "none")
_RGB_POLICIES = ("luminance", "gray")


class ConfigError(ValueError):
    """Rejected pipeline configuration."""


class PipelineStageError(RuntimeError):
    """Failure wrapped with the pipeline stage that raised it."""

    def __init__(self, stage, err):
        super().__init__(f"{stage}: {err}")
        self.stage = stage
        self.original = err


@dataclass(frozen=True)
class PipelineConfig:
    """Flat pipeline configuration; the JSON config file mirrors these
    fields exactly and unknown keys are rejected.

    ar_p/ar_q and psf_l/psf_m are the stencil and kernel orders (odd,
    kernel strictly smaller). schema 'none' stops at the primary estimate.
    regularizer 'none' disables the smoothing term in the refinement.
    denoise_stages 0 skips the prior cascade.
    """
    ar_p: int = 17
    ar_q: int = 17
    psf_l: int = 7
    psf_m: int = 7
    ar_reg: bool = False
    ar_reg_lambda: float = 0.001
    ipsf_q: int = 3
    ipsf_theta: float = 2.0
    ipsf_eps: float = 1e-8
    ipsf_max_iters: int = 30
    schema: str = "cs"
    dt: float = 1.0
    lambda0: float = None
    regularizer: str = "saf"
    tv_beta: float = 1e-4
    schema_q: int = 5
    schema_theta: float = 1.0
    schema_eps: float = 1e-8
    schema_max_iters: int = None
    zero_guard: float = 1e-6
    enforce_dt_bounds: bool = False
    denoise_stages: int = 0
    denoise_p: int = 33
    denoise_q: int = 33
    denoise_l: int = 17
    denoise_m: int = 17
    rgb_policy: str = "luminance"
    no_blur_eig_ratio: float = 0.1
    out_dir: str = None

    def __post_init__(self):
        try:
            self._validate()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def _validate(self):
        _check_orders("ar/psf", self.ar_p, self.ar_q, self.psf_l, self.psf_m)
        if self.denoise_stages < 0:
            raise ValueError("denoise_stages must be >= 0")
        if self.denoise_stages > 0:
            _check_orders("denoise", self.denoise_p, self.denoise_q,
                          self.denoise_l, self.denoise_m)
        if self.schema not in _SCHEMAS:
            raise ValueError(f"schema must be one of {_SCHEMAS}")
        if self.regularizer not in _REGULARIZERS:
            raise ValueError(f"regularizer must be one of {_REGULARIZERS}")
        if self.rgb_policy not in _RGB_POLICIES:
            raise ValueError(f"rgb_policy must be one of {_RGB_POLICIES}")
        if not (self.dt > 0):
            raise ValueError("dt must be > 0")
        for name in ("ipsf_eps", "schema_eps"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0")
        if self.ipsf_theta < 1 or self.schema_theta < 1:
            raise ValueError("theta bounds must be >= 1")
        if self.ipsf_q < 1 or self.schema_q < 0:
            raise ValueError("invalid transition window")
        if self.ipsf_max_iters < 1:
            raise ValueError("ipsf_max_iters must be >= 1")
        if self.schema_max_iters is not None and self.schema_max_iters < 1:
            raise ValueError("schema_max_iters must be >= 1")
        if self.tv_beta < 0:
            raise ValueError("tv_beta must be >= 0")
        if self.no_blur_eig_ratio is not None and self.no_blur_eig_ratio < 0:
            raise ValueError("no_blur_eig_ratio must be >= 0 or None")
        if self.ar_reg_lambda < 0:
            raise ValueError("ar_reg_lambda must be >= 0")
        if self.zero_guard <= 0:
            raise ValueError("zero_guard must be > 0")

    def schema_config(self):
        if self.schema in ("none",):
            return None
        return schemas.SchemaConfig(
            schema=self.schema, dt=self.dt, lambda0=self.lambda0,
            regularizer=self.regularizer_obj(), q=self.schema_q,
            theta=self.schema_theta, eps=self.schema_eps,
            max_iters=self.schema_max_iters, zero_guard=self.zero_guard,
            enforce_dt_bounds=self.enforce_dt_bounds)

    def regularizer_obj(self):
        if self.regularizer == "saf":
            return SAF
        if self.regularizer == "tv":
            return Regularizer("tv", beta=self.tv_beta)
        return None

    def ipsf_config(self):
        return ipsf.IpsfConfig(q=self.ipsf_q, theta=self.ipsf_theta,
                               eps=self.ipsf_eps,
                               max_iters=self.ipsf_max_iters)

    def ar_reg_config(self):
        if not self.ar_reg:
            return None
        return ar.ArRegConfig(lam=self.ar_reg_lambda)


def _check_orders(label, p, q, l, m):
    for name, v in (("p", p), ("q", q), ("l", l), ("m", m)):
        if v < 1 or v % 2 == 0:
            raise ValueError(f"{label} order {name}={v} must be odd and >= 1")
    if not (l < p and m < q):
        raise ValueError(f"{label} kernel {l}x{m} must be strictly smaller "
                         f"than stencil {p}x{q}")


def config_to_json(cfg):
    """Canonical textual form: sorted keys, two-space indent."""
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n"


def config_from_json(text):
    """Parse the flat JSON form; unknown keys are an error, missing keys
    take their defaults."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return PipelineConfig(**obj)


@dataclass
class PipelineResult:
    s_hat: Image
    psf: np.ndarray
    ipsf: np.ndarray
    primary: Image
    traces: list
    ar_model: object
    null_diag: object
    ipsf_report: object
    denoise_stages: list
    x_pr: Image
    no_blur: bool
    schema_error: str = None


@dataclass
class QualityReport:
    psnr_db: float
    baseline_psnr_db: float
    improvement_db: float
    mean_abs_diff: float
    max_abs_diff: float
    kernel_ncc: float = None


def blind_deblur(img, cfg):
    """Run the full blind pipeline on an image.

    Stages: optional prior-denoise cascade, stencil fit on a luminance
    patch, kernel from the conjugated null space (unit-impulse fallback on
    unblurred textures), inverse-kernel optimization with LS fallback,
    primary estimate per channel, iterative refinement per channel.
    Failures before the refinement raise PipelineStageError; a refinement
    failure is isolated, the result keeps the primary estimate and the
    error text.
    """
    if not isinstance(img, Image):
        img = Image.from_plane(as_plane(img))
    if cfg.rgb_policy == "gray" and img.n_channels > 1:
        img = Image.from_plane(luminance(img))

    stage_records = []
    work = img
    if cfg.denoise_stages > 0:
        try:
            lum = luminance(work)
            for _ in range(cfg.denoise_stages):
                stage = denoise.prior_filter(
                    lum, cfg.denoise_p, cfg.denoise_q, cfg.denoise_l,
                    cfg.denoise_m, no_blur_eig_ratio=cfg.no_blur_eig_ratio)
                stage_records.append(stage)
                work = work.map(lambda p: conv_same(p, stage.ipsf_prior,
                                                    BoundaryMode.REPLICATE))
                lum = stage.x_out if work.n_channels == 1 else luminance(work)
        except Exception as e:
            raise PipelineStageError("denoise", e) from e

    lum = luminance(work)
    try:
        patch = ar.select_patch(lum, cfg.ar_p, cfg.ar_q)
        model = ar.estimate_ar(patch, cfg.ar_p, cfg.ar_q,
                               reg=cfg.ar_reg_config())
    except Exception as e:
        raise PipelineStageError("ar", e) from e
    try:
        h, diag, no_blur = cns.estimate_psf(
            model, cfg.psf_l, cfg.psf_m,
            no_blur_eig_ratio=cfg.no_blur_eig_ratio)
    except Exception as e:
        raise PipelineStageError("cns", e) from e
    try:
        problem = ipsf.build_problem(lum, h)
        report = ipsf.optimize_ipsf(problem, cfg.ipsf_config())
        g = report.g
    except Exception as e:
        raise PipelineStageError("ipsf", e) from e

    primary = work.map(lambda p: conv_same(p, g, BoundaryMode.REPLICATE))

    traces = []
    schema_error = None
    scfg = cfg.schema_config()
    if scfg is None:
        s_hat = primary
    else:
        planes = []
        try:
            for p in work.planes:
                s, trace = schemas.run_schema(p, h, g, scfg)
                planes.append(s)
                traces.append(trace)
            s_hat = Image(tuple(planes))
        except schemas.SchemaDivergenceError as e:
            traces.append(e.trace)
            schema_error = f"schema: {e}"
            s_hat = primary
        except Exception as e:
            schema_error = f"schema: {e}"
            s_hat = primary

    return PipelineResult(
        s_hat=s_hat, psf=h, ipsf=g, primary=primary, traces=traces,
        ar_model=model, null_diag=diag, ipsf_report=report,
        denoise_stages=stage_records, x_pr=work, no_blur=no_blur,
        schema_error=schema_error)


def evaluate(fixture, result, psf=None):
    """Score a deblur output against a synthetic fixture.

    result may be a PipelineResult, an Image, or a plane. The baseline is
    the fixture's blurred image, so a no-op result scores improvement 0.
    kernel_ncc is filled when a kernel is available (from the result or
    the psf argument).
    """
    if isinstance(result, PipelineResult):
        if psf is None:
            psf = result.psf
        out = result.s_hat
    elif isinstance(result, Image):
        out = result
    else:
        out = Image.from_plane(as_plane(result))
    clean = fixture.clean
    if out.n_channels != clean.n_channels or out.shape != clean.shape:
        raise ValueError(f"result {out.n_channels}x{out.shape} does not "
                         f"match clean {clean.n_channels}x{clean.shape}")
    p = psnr(out, clean)
    base = psnr(fixture.blurred, clean)
    diffs = [np.abs(a - b) for a, b in zip(out.planes, clean.planes)]
    kn = None
    if psf is not None and psf.shape == fixture.true_psf.shape:
        kn = ncc(psf, fixture.true_psf)
    return QualityReport(
        psnr_db=p, baseline_psnr_db=base, improvement_db=p - base,
        mean_abs_diff=float(np.mean([mean_abs(d) for d in diffs])),
        max_abs_diff=float(max(d.max() for d in diffs)),
        kernel_ncc=kn)


def trace_json_obj(cfg, traces):
    """Trace artifact layout: schema, config echo, per-channel records."""
    return {
        "schema": cfg.schema,
        "config_echo": dataclasses.asdict(cfg),
        "channels": [t.to_json_obj()["records"] for t in traces],
        "stop_reasons": [t.stop_reason for t in traces],
    }
