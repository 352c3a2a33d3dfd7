"""Color-domain adaptation: push one image's pixel cloud onto another's.

Pixels are treated as samples in RGB space ([0,1]^3). A monotone-gradient
map trained with a Gaussian-target NLL moves the source cloud onto a
Gaussian fitted to the target image, and monotonicity keeps the color
mapping free of order reversals along any direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import UnsupportedFormat
from .linalg import logdet_pd, solve_lower
from .models import forward, forward_batch, init_params, jacobian_batch
from .seeding import STREAM_DATA, substream
from .training import LOG_2PI, ArraySampler, chol_logdet_batch, train
from .transport import fit_gaussian, gaussian_kl

_ACCEPTED_MODES = ("RGB", "RGBA")


def load_image(path):
    """Decode an 8-bit RGB or RGBA image to float64 (H, W, 3) in [0, 1].

    Alpha is discarded. Other modes (palette, grayscale, 16-bit) raise
    UnsupportedFormat; undecodable files raise OSError from the decoder.
    """
    with Image.open(path) as img:
        if img.mode not in _ACCEPTED_MODES:
            raise UnsupportedFormat(f"{path}: mode {img.mode!r}, need one of {_ACCEPTED_MODES}")
        arr = np.asarray(img, dtype=np.uint8)
    return arr[..., :3].astype(np.float64) / 255.0


def save_image(path, values):
    """Write float (H, W, 3) values as 8-bit PNG, rounding half up."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or values.shape[-1] != 3:
        raise UnsupportedFormat(f"expected (H, W, 3) values, got shape {values.shape}")
    byte = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(byte, mode="RGB").save(path, format="PNG")


def image_pixels(values):
    """Flatten image values (H, W, 3) into a pixel matrix (H*W, 3)."""
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(-1, values.shape[-1])


def gaussian_flow_nll(model, inputs, target):
    """Mean NLL of model-mapped inputs under an arbitrary Gaussian target.

    Identical arithmetic to the standard-normal flow loss when the target
    is N(0, I); the general case whitens the residual with the target's
    Cholesky factor and pays the extra 0.5 logdet covariance.
    """
    pred = forward_batch(model, inputs)
    jac = jacobian_batch(model, inputs)
    logdet = chol_logdet_batch(jac)
    n = inputs.shape[-1]
    inv_low_t = solve_lower(target.chol, np.eye(n))
    white = (pred - target.mean) @ inv_low_t
    quad = (white * white).sum(axis=-1)
    per_sample = 0.5 * quad - logdet + 0.5 * n * LOG_2PI + 0.5 * logdet_pd(target.covariance)
    return per_sample.mean()


@dataclass
class AdaptationResult:
    """Per-epoch KL trace of the mapped source cloud against the target fit."""

    kl_history: list
    final_kl: float
    target_mean: np.ndarray
    target_covariance: np.ndarray
    pixels_used: int


def subsample_pixels(pixels, max_pixels, seed):
    """Seeded without-replacement cap on the training pixel count."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[0] <= max_pixels:
        return pixels
    rng = substream(seed, STREAM_DATA)
    idx = rng.choice(pixels.shape[0], size=max_pixels, replace=False)
    return pixels[idx]


def adapt_train(source_pixels, target_pixels, spec, cfg, seed, max_pixels=100_000):
    """Fit the target Gaussian and train a map of source pixels onto it.

    Returns (AdaptationResult, trained model, TrainReport). The KL history
    is measured on the (possibly subsampled) training pixels after every
    epoch by refitting a Gaussian to the mapped cloud.
    """
    target = fit_gaussian(np.asarray(target_pixels, dtype=np.float64))
    pixels = subsample_pixels(source_pixels, max_pixels, seed)
    model = init_params(spec, seed)
    sampler = ArraySampler(pixels, seed, cfg.batch_size)
    kl_history = []

    def measure(epoch, epoch_model):
        mapped = forward(epoch_model, pixels)
        kl_history.append(gaussian_kl(fit_gaussian(mapped), target))

    trained, report = train(
        model,
        sampler,
        cfg,
        epoch_hook=measure,
        loss_fn=lambda m, batch: gaussian_flow_nll(m, batch[0], target),
    )
    if not kl_history:
        measure(-1, trained)
    result = AdaptationResult(
        kl_history=[float(v) for v in kl_history],
        final_kl=float(kl_history[-1]),
        target_mean=target.mean,
        target_covariance=target.covariance,
        pixels_used=pixels.shape[0],
    )
    return result, trained, report


def adapt_apply(model, values):
    """Map every pixel of an image through the model, clamped to [0, 1].

    Pixels are mapped independently, so the result is invariant to pixel
    order and image shape.
    """
    values = np.asarray(values, dtype=np.float64)
    mapped = forward(model, values.reshape(-1, values.shape[-1]))
    return np.clip(mapped, 0.0, 1.0).reshape(values.shape)
