"""Unpaired video-to-video translation laboratory."""

__version__ = "0.1.0"

from .video_core import (  # noqa: F401
    ClipWindow,
    DatasetManifest,
    VideoTensor,
    load_clip,
    save_clip,
    slice_window,
    to_model_space,
    to_storage_space,
)
