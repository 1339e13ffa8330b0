"""RandAugment: n random ops per image at a shared integer magnitude.

Each call draws ``num_ops`` transforms uniformly (with replacement) from a
14-op vocabulary and applies them in order.  The magnitude index 0..10 maps
linearly onto each op's extreme range; signed ops flip direction with
probability 1/2.  All randomness comes from the caller's generator so the
same generator state reproduces the same augmented image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageEnhance, ImageOps

_FILL = (128, 128, 128)
MAX_MAGNITUDE = 10

# Extreme values reached at magnitude 10.
_MAX_ROTATE_DEG = 30.0
_MAX_SHEAR = 0.3
_MAX_TRANSLATE_FRAC = 150.0 / 331.0
_MAX_ENHANCE_DELTA = 0.9  # enhancement factor spans 1 +/- 0.9


def _signed(value: float, rng: np.random.Generator) -> float:
    return value if rng.random() < 0.5 else -value


def _identity(img, level, rng):
    return img


def _auto_contrast(img, level, rng):
    return ImageOps.autocontrast(img)


def _equalize(img, level, rng):
    return ImageOps.equalize(img)


def _rotate(img, level, rng):
    deg = _signed(_MAX_ROTATE_DEG * level, rng)
    return img.rotate(deg, resample=Image.BILINEAR, fillcolor=_FILL)


def _solarize(img, level, rng):
    # threshold 256 at magnitude 0 leaves the image untouched
    return ImageOps.solarize(img, int(round(256 * (1.0 - level))))


def _posterize(img, level, rng):
    return ImageOps.posterize(img, 8 - int(round(4 * level)))


def _enhance(factory):
    def op(img, level, rng):
        return factory(img).enhance(1.0 + _signed(_MAX_ENHANCE_DELTA * level, rng))

    return op


def _shear_x(img, level, rng):
    s = _signed(_MAX_SHEAR * level, rng)
    return img.transform(
        img.size, Image.AFFINE, (1, s, 0, 0, 1, 0), resample=Image.BILINEAR, fillcolor=_FILL
    )


def _shear_y(img, level, rng):
    s = _signed(_MAX_SHEAR * level, rng)
    return img.transform(
        img.size, Image.AFFINE, (1, 0, 0, s, 1, 0), resample=Image.BILINEAR, fillcolor=_FILL
    )


def _translate_x(img, level, rng):
    px = _signed(round(_MAX_TRANSLATE_FRAC * img.size[0] * level), rng)
    return img.transform(
        img.size, Image.AFFINE, (1, 0, px, 0, 1, 0), resample=Image.BILINEAR, fillcolor=_FILL
    )


def _translate_y(img, level, rng):
    px = _signed(round(_MAX_TRANSLATE_FRAC * img.size[1] * level), rng)
    return img.transform(
        img.size, Image.AFFINE, (1, 0, 0, 0, 1, px), resample=Image.BILINEAR, fillcolor=_FILL
    )


_OPS = {
    "identity": _identity,
    "auto-contrast": _auto_contrast,
    "equalize": _equalize,
    "rotate": _rotate,
    "solarize": _solarize,
    "color": _enhance(ImageEnhance.Color),
    "posterize": _posterize,
    "contrast": _enhance(ImageEnhance.Contrast),
    "brightness": _enhance(ImageEnhance.Brightness),
    "sharpness": _enhance(ImageEnhance.Sharpness),
    "shear-x": _shear_x,
    "shear-y": _shear_y,
    "translate-x": _translate_x,
    "translate-y": _translate_y,
}

OP_NAMES = tuple(_OPS)


@dataclass(frozen=True)
class RandAugmentPolicy:
    """num_ops transforms per image, all at the same magnitude index."""

    num_ops: int = 1
    magnitude: int = 5
    op_names: tuple[str, ...] = OP_NAMES

    def __post_init__(self):
        if self.num_ops < 1:
            raise ValueError("num_ops must be >= 1")
        if not (0 <= self.magnitude <= MAX_MAGNITUDE):
            raise ValueError(f"magnitude must lie in [0, {MAX_MAGNITUDE}]")
        unknown = set(self.op_names) - set(_OPS)
        if unknown:
            raise ValueError(f"unknown ops: {sorted(unknown)}")
        if not self.op_names:
            raise ValueError("op_names must be non-empty")


def identity_policy(num_ops: int = 1) -> RandAugmentPolicy:
    """Policy whose only op is identity; lets tests disable augmentation
    without changing the surrounding pipeline or its random-draw count."""
    return RandAugmentPolicy(num_ops=num_ops, magnitude=0, op_names=("identity",))


def apply_randaugment(
    image: np.ndarray, policy: RandAugmentPolicy, rng: np.random.Generator
) -> np.ndarray:
    """Augment one uint8 HxWx3 image; returns a new array of the same shape."""
    if image.dtype != np.uint8 or image.ndim != 3:
        raise ValueError("expected a uint8 HxWx3 image")
    img = Image.fromarray(image)
    level = policy.magnitude / MAX_MAGNITUDE
    for _ in range(policy.num_ops):
        name = policy.op_names[int(rng.integers(len(policy.op_names)))]
        img = _OPS[name](img, level, rng)
    return np.asarray(img, dtype=np.uint8)
