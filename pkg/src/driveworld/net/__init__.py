from .blocks import (AxisContractError, AxisDims, CrossAttention, CrossCondBlock,
                     MultiviewBlock, SelfAttention, SpatialBlock, TemporalBlock,
                     timestep_embedding, zero_module)
from .conditioning import (image_frame_cond_tokens, joint_cond_tokens,
                           stitch_cond_tokens)
from .training import (ClipCache, TrainLog, TrainingStateError, WorldModel,
                       build_model, lift_to_video, model_from_config,
                       net_config_from, train_image_stage, train_video_stage,
                       two_stage_fit)
from .unet import NetConfig, WorldModelUNet

__all__ = [
    "AxisContractError", "AxisDims", "ClipCache", "CrossAttention",
    "CrossCondBlock", "MultiviewBlock", "NetConfig", "SelfAttention",
    "SpatialBlock", "TemporalBlock", "TrainLog", "TrainingStateError",
    "WorldModel", "WorldModelUNet", "build_model", "image_frame_cond_tokens",
    "joint_cond_tokens", "lift_to_video", "model_from_config",
    "net_config_from", "stitch_cond_tokens", "timestep_embedding",
    "train_image_stage", "train_video_stage", "two_stage_fit", "zero_module",
]
