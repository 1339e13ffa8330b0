from .randaugment import OP_NAMES, RandAugmentPolicy, apply_randaugment, identity_policy
from .swa import SWAAccumulator, SWASchedule, recalibrate_bn, swa_schedule_from_config
from .weights import class_weights

__all__ = [
    "OP_NAMES",
    "RandAugmentPolicy",
    "apply_randaugment",
    "identity_policy",
    "SWAAccumulator",
    "SWASchedule",
    "recalibrate_bn",
    "swa_schedule_from_config",
    "class_weights",
]
