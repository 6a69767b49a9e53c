"""Blind image deblurring via the conjugated null space of a 2D
autoregressive image model.

The library estimates a blur kernel from a single image, derives a
regularized inverse kernel on the same small support, applies it as a
one-step deconvolution, and refines the estimate with iterative schemas
monitored by a shared convergence rule. A prior-denoise cascade handles
impulsive noise, and a pipeline plus CLI tie the stages together.
"""
from .image import (Image, as_kernel, as_plane, load_image, load_kernel,
                    luminance, mean_abs, mean_sq, ncc, normalize_psf, psnr,
                    save_image, save_kernel)
from .ops import (SAF, BoundaryMode, Regularizer, conv_full, conv_same,
                  correlate_adjoint, delta_kernel, metric_det, saf_operator,
                  tv_operator)
from .ar import ArModel, ArRegConfig, build_extended, estimate_ar, select_patch
from .cns import (AmbiguityError, NullSpaceDiagnostics, build_block_operator,
                  cns_estimate, estimate_psf, psf_shape_report)
from .ipsf import (IpsfConfig, IpsfProblem, IpsfSolveReport, build_problem,
                   optimize_ipsf, solve_ls)
from .schemas import (ConvergenceTrace, LambdaState, SchemaConfig,
                      SchemaDivergenceError, StepRecord, bvdr_run,
                      cs_lambda_field, cs_run, dynamic_lambda, lr_psf_update,
                      lr_step, lrme_step, monitor_step, run_schema)
from .denoise import CascadeStage, cascade, impulse_energy, prior_filter
from .fixtures import (NoiseSpec, SyntheticFixture, gaussian_kernel,
                       make_fixture, motion_diag_kernel, motion_h_kernel,
                       texture_multiscale, texture_smooth, texture_white)
from .pipeline import (ConfigError, PipelineConfig, PipelineResult,
                       PipelineStageError, QualityReport, blind_deblur,
                       config_from_json, config_to_json, evaluate)
from .backend import BACKEND_NAME

__version__ = "0.1.0"
