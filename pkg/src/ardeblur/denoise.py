"""Prior denoising by the unoptimized least-squares inverse kernel.

The additive refinement schemas sharpen every surface curve, so impulsive
noise has to be tamed before they run. The plain LS inverse kernel, fitted
at high order, sits between the identity and the reblur: convolving with it
accumulates weighted neighborhoods without the extra smoothing a low-pass
prior would add. Stages can be cascaded, each one re-estimating its model
from the previous stage's output.
"""
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import ar, cns, ipsf
from .image import as_plane, mean_abs, save_kernel
from .ops import BoundaryMode, conv_same

__all__ = ["CascadeStage", "prior_filter", "cascade", "impulse_energy"]

# Truncation for the prior inverse. The high-order normal matrix is
# numerically singular (cond ~ 1e14 on broad kernels); keeping modes past
# ~1e-4 turns the accumulation filter into a ringing inverse that throws
# outputs far outside [0, 1] and multiplies impulse energy instead of
# shrinking it.
PRIOR_RCOND = 1e-4


@dataclass
class CascadeStage:
    """One denoise stage: estimated kernel, its LS inverse, filtered plane."""
    psf: np.ndarray
    ipsf_prior: np.ndarray
    x_out: np.ndarray
    shape_report: dict = None
    no_blur: bool = False


def prior_filter(x, p, q, l, m, no_blur_eig_ratio=0.1, reg_config=None):
    """Estimate the blur from x and apply the plain LS inverse kernel.

    Fits the autoregressive stencil on a centered patch, extracts the
    kernel from the conjugated null space (falling back to a unit impulse
    when the texture shows no blur), solves the normal equations for the
    inverse kernel without any smoothing-driven refinement, and returns the
    filtered plane together with the stage record.

    Parameters
    ----------
    x : array_like
        Observed plane.
    p, q : int
        Stencil orders (odd, l < p and m < q).
    l, m : int
        Kernel support (odd).
    no_blur_eig_ratio : float or None
        Smallest-to-largest eigenvalue ratio above which the texture is
        treated as unblurred; None disables the fallback.
    reg_config : ar.ArRegConfig or None
        Optional stencil-fit smoothing; the reference regime leaves it off.

    Returns
    -------
    CascadeStage
    """
    x = as_plane(x)
    patch = ar.select_patch(x, p, q)
    model = ar.estimate_ar(patch, p, q, reg=reg_config)
    h, diag, no_blur = cns.estimate_psf(model, l, m,
                                        no_blur_eig_ratio=no_blur_eig_ratio)
    if no_blur:
        # Unblurred texture: the truncated inverse of a unit impulse is not
        # the identity, so filtering would only damage the plane. Pass it
        # through untouched.
        return CascadeStage(psf=h, ipsf_prior=h.copy(), x_out=x.copy(),
                            shape_report=cns.psf_shape_report(h),
                            no_blur=True)
    problem = ipsf.build_problem(x, h)
    g_pr = ipsf.solve_ls(problem, rcond=PRIOR_RCOND)
    x_out = conv_same(x, g_pr, BoundaryMode.REPLICATE)
    return CascadeStage(psf=h, ipsf_prior=g_pr, x_out=x_out,
                        shape_report=cns.psf_shape_report(h), no_blur=no_blur)


def cascade(x, stages, p, q, l, m, no_blur_eig_ratio=0.1, reg_config=None,
            dump_dir=None):
    """Run sequential prior filters, each adapted to the previous output.

    Orders stay fixed across stages. With dump_dir set, every stage's
    kernel pair is written there in the kernel text format.

    Returns
    -------
    (ndarray, list of CascadeStage)
        Final filtered plane and the per-stage records.
    """
    if stages < 1:
        raise ValueError("stages must be >= 1")
    plane = as_plane(x)
    records = []
    for i in range(stages):
        stage = prior_filter(plane, p, q, l, m,
                             no_blur_eig_ratio=no_blur_eig_ratio,
                             reg_config=reg_config)
        records.append(stage)
        plane = stage.x_out
        if dump_dir is not None:
            save_kernel(stage.psf, os.path.join(dump_dir, f"stage{i}_psf.txt"))
            save_kernel(stage.ipsf_prior,
                        os.path.join(dump_dir, f"stage{i}_ipsf.txt"))
    return plane, records


def impulse_energy(x):
    """Mean absolute residual against a 3x3 median: an impulsive-noise
    gauge that ignores smooth structure."""
    x = as_plane(x)
    return mean_abs(x - ndimage.median_filter(x, size=3, mode="nearest"))
