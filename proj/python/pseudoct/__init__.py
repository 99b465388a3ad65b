"""Python access to the pseudo-CT denoising core.

Images are float32 arrays in [0, 1], either (h, w) or (n, 1, h, w).
"""

from ._core import (  # noqa: F401
    Denoiser,
    NoiseEnsemble,
    default_run_config,
    ensemble_noise,
    gaussian_noise,
    lag1_autocorrelation,
    load_ensemble,
    n2v_mask,
    psnr,
    run_pipeline,
    ssim,
    synth_ldct,
    synth_phantom,
)

__version__ = "0.1.0"
