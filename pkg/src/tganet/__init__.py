"""TGANet: text-guided attention polyp segmentation, training, and evaluation."""

from .attributes import (
    ATTRIBUTE_WORDS,
    AttributeEmbeddings,
    AttributeLabel,
    CountClass,
    SizeClass,
    SizeThresholds,
    derive_attribute_label,
    derive_count_attribute,
    derive_size_attribute,
    fit_size_thresholds,
    fuse_embeddings,
    load_attribute_embeddings,
)
from .losses import LossBreakdown, classification_loss, dice_loss, joint_loss, segmentation_loss
from .metrics import (
    ConfusionCounts,
    MetricSet,
    StratifiedReport,
    aggregate,
    compute_metric_set,
    confusion_counts,
    stratified_report,
)
from .model import (
    ABLATION_VARIANTS,
    AttributeLogits,
    NetworkConfig,
    NetworkOutput,
    TGANet,
    VARIANT_ORDER,
    ablation_config,
    load_checkpoint,
    model_from_checkpoint,
    parameter_count,
    save_checkpoint,
)
from .training import (
    ScheduleState,
    TrainConfig,
    TrainHistory,
    evaluate_model,
    train,
    update_schedule,
)

__version__ = "0.1.0"
