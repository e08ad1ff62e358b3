from .dataset import SamplePair, as_raster, list_ids, load_record, make_dataset, make_pair, random_crop, read_split
from .degrade import (
    DEFAULT_SIGMAS,
    DegradationSpec,
    degrade,
    downsample_bicubic,
    gaussian_blur,
    gaussian_kernel,
    resample_matrix,
    upsample_bicubic,
)

__all__ = [
    "DEFAULT_SIGMAS",
    "DegradationSpec",
    "SamplePair",
    "as_raster",
    "degrade",
    "downsample_bicubic",
    "gaussian_blur",
    "gaussian_kernel",
    "list_ids",
    "load_record",
    "make_dataset",
    "make_pair",
    "random_crop",
    "read_split",
    "resample_matrix",
    "upsample_bicubic",
]
