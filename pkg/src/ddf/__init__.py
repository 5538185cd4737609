"""Dual-domain fusion semi-supervised learning for 1D time series."""

from .classifiers import ClassifierSpec, fit, gradient_check, predict
from .fusion import FusionWeights, decide, fit_fusion_weights, fuse, standardize
from .protocol import SplitPlan, evaluate, make_temporal_splits
from .signal_core import (
    FilterSpec,
    NoiseSpec,
    Recording,
    SegmentSet,
    add_noise,
    apply_filter,
    decimate,
    design_lowpass,
    segment,
)
from .ssl import (
    SslConfig,
    SslData,
    StepReport,
    balance_classes,
    ddf_step,
    run_ddf,
    run_self_training,
    threshold_select,
)
from .tfr import (
    CkdParams,
    Tfr,
    TfrConfig,
    ambiguity_function,
    analytic_signal,
    ckd_kernel,
    compute_ckd_tfr,
    downsample_tfr,
    wvd,
)

__version__ = "0.1.0"
