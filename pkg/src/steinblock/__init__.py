"""Stein block thresholding for d-dimensional denoising."""

from .core_model import (BlockPartition, CoefficientSet, DenoiseConfig, FrameSpec, build_partition,
                         curvelet_2d, scale_bounds, theoretical_block_size, validate_frame_spec,
                         wavelet_1d, wavelet_2d)
from .errors import (FormatError, InvalidParameterError, LayoutError, MissingNoiseScaleError,
                     SteinBlockError)
from .shrinkage import (ShrinkReport, blockjs_1d, blockjs_estimate, config_for, lambda_correlated,
                        shrink_block, solve_lambda_star, term_threshold)
from .transforms import TransformHandle, calibrate_noise, estimate_sigma_mad, forward, inverse

__version__ = "0.1.0"
