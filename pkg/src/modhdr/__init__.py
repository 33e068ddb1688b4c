"""Modulo-sensor HDR simulation, closed-form unwrapping and a toy learned restorer."""

from .sensor import HdrImage, ItohReport, ModuloImage, NonFiniteError, ScaleTransform, WrappedGradient
from .sensor import itoh_satisfied, scale, wrap, wrapped_diff
from .unwrap import Gauge, UnwrapSolution, solve_dct, solve_dense_oracle, unwrap_exact
from .features import FeatureConfig, FeatureStack, Normalization, build_features
from .metrics import DisplayMap, MetricReport, Pu21Encoder, evaluate, msssim, psnr, reinhard_tonemap, ssim

__version__ = "0.1.0"
