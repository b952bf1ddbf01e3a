"""Document instance segmentation with twin attention and dynamic mask kernels."""

from docsegtr._core import (
    ConfigError,
    FormatError,
    Model,
    NumericError,
    attention_score_count,
    class_names,
    coco_map,
    dice_loss,
    dynamic_conv,
    focal_loss,
    generate_sample,
    lr_at,
    mask_iou,
    matrix_nms,
    rle_decode,
    rle_encode,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "Model",
    "NumericError",
    "attention_score_count",
    "class_names",
    "coco_map",
    "dice_loss",
    "dynamic_conv",
    "focal_loss",
    "generate_sample",
    "lr_at",
    "mask_iou",
    "matrix_nms",
    "rle_decode",
    "rle_encode",
]

__version__ = "0.1.0"
