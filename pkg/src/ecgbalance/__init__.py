"""Imbalanced multi-channel ECG classification building blocks.

Two ideas carry the package: a channel magnitude equalizer (CME) that
rescales each channel by a softmax over negated channel magnitudes before
encoding the record as a fixed-size image, and the inverted-weight
logarithmic (IWL) loss, a cross-entropy variant that multiplies each
record's loss by (log(10/(p+eps)))**beta so low-confidence (typically
tail-class) records drive proportionally larger gradients. Around them:
a long-tail resampler, baseline losses, a small deterministic trainer,
and an experiment grid driver.
"""

from .data import (
    CANONICAL_CLASS_NAMES,
    CANONICAL_LEADS,
    CANONICAL_SAMPLE_RATE,
    Dataset,
    EcgRecord,
    SplitSpec,
    SynthSpec,
    generate_synthetic,
    load_csv,
    split,
    window_record,
    write_csv_dataset,
)
from .equalizer import (
    ChannelMagnitudeStats,
    ChannelScaleFactors,
    EncodedImage,
    channel_stats,
    cme_factors,
    cme_pipeline,
    encode_image,
    read_image_csv,
    read_image_raw,
    scale_channels,
    write_image_csv,
    write_image_raw,
)
from .errors import (
    ConfigError,
    DimensionError,
    EcgBalanceError,
    EmptyDataset,
    EncodeError,
    MalformedRecord,
    NonFiniteSample,
    SpecError,
    UnknownClass,
    WindowOutOfRange,
)
from .experiment import (
    ExperimentSpec,
    ResultRow,
    parse_experiment_spec,
    run_experiment,
    write_results_csv,
)
from .imbalance import ImbalanceProfile, longtail_counts, resample
from .losses import (
    GRADCHECK_LOSSES,
    BaselineLossConfig,
    BatchLoss,
    GradCheckResult,
    IwlConfig,
    LossOutput,
    PredictionVector,
    canonical_loss_name,
    class_balanced_loss,
    cross_entropy,
    effective_number_weights,
    finite_difference_grad,
    focal_loss,
    gradient_check,
    iwl_loss,
    iwl_point_value,
    iwl_weight,
    ldam_loss,
    ldam_margins,
    make_loss,
    one_hot,
    relative_gradient_error,
    softmax,
)
from .trainer import (
    AdamState,
    EncoderSpec,
    Metrics,
    ModelParams,
    TrainConfig,
    adam_init,
    adam_step,
    backward,
    evaluate,
    forward,
    init_model,
    load_model,
    metrics_from_confusion,
    save_model,
    train,
)

__version__ = "0.1.0"
