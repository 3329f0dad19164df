from .frechet import (InputError, encode_frames, feature_encoder,
                      frechet_feature_distance, frechet_gaussian, gaussian_stats)
from .keypoints import (KPMReport, Keypoint, detect_keypoints, harris_response,
                        kpm_score, match_points, overlap_strips)
from .layout import LayoutAdherence, background_mask, foreground_mask, layout_adherence

__all__ = [
    "InputError", "KPMReport", "Keypoint", "LayoutAdherence",
    "background_mask", "detect_keypoints", "encode_frames", "feature_encoder",
    "foreground_mask", "frechet_feature_distance", "frechet_gaussian",
    "gaussian_stats", "harris_response", "kpm_score", "layout_adherence",
    "match_points", "overlap_strips",
]
