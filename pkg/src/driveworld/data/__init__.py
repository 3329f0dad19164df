from .binning import (ActionBin, BehaviorSegment, ClipIndex, digitize_action,
                      resample_bins, split_clips_by_behavior)
from .clips import MultiviewClip, generate_clip, rig_from_config
from .generate import bin_histogram, generate_dataset, tag_clip
from .store import Dataset, FormatError, export_dataset, load_clip, load_dataset, save_clip

__all__ = [
    "ActionBin", "BehaviorSegment", "ClipIndex", "Dataset", "FormatError",
    "MultiviewClip", "bin_histogram", "digitize_action", "export_dataset",
    "generate_clip", "generate_dataset", "load_clip", "load_dataset",
    "resample_bins", "rig_from_config", "save_clip", "split_clips_by_behavior",
    "tag_clip",
]
