from .sampling import NumericError, cfg_combine, ddim_step, sample, sub_schedule
from .schedule import ALPHA_BAR_MIN, NoiseSchedule, ScheduleError, diffuse, make_schedule
from .training import denoising_loss

__all__ = [
    "ALPHA_BAR_MIN", "NoiseSchedule", "NumericError", "ScheduleError",
    "cfg_combine", "ddim_step", "denoising_loss", "diffuse", "make_schedule",
    "sample", "sub_schedule",
]
