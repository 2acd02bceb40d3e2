"""Audio-visual segmentation with semantic audio prompts."""

from ._gavs import (
    Dataset,
    Model,
    Split,
    __version__,
    default_config,
    evaluate,
    fscore,
    generate_dataset,
    gradcheck,
    load_checkpoint,
    load_dataset,
    make_split,
    mask_iou,
    miou,
    pretrain,
    train,
)

__all__ = [
    "Dataset",
    "Model",
    "Split",
    "__version__",
    "default_config",
    "evaluate",
    "fscore",
    "generate_dataset",
    "gradcheck",
    "load_checkpoint",
    "load_dataset",
    "make_split",
    "mask_iou",
    "miou",
    "pretrain",
    "train",
]
