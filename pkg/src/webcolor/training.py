"""Model construction, checkpoint round-trips and the minibatch training loop."""

from __future__ import annotations

import logging
import math
from typing import Callable, Sequence

import numpy as np

from . import checkpoint
from .batch import PageBatch
from .models import ARModel, CoreModel, CVAEModel, ModelConfig, NARModel
from .optim import AdamW
from .page import PageTree
from .tensor import backward
from .upsample import Upsampler

log = logging.getLogger(__name__)

MODEL_CLASSES = {"ar": ARModel, "nar": NARModel, "cvae": CVAEModel, "upsampler": Upsampler}


def build_model(config: ModelConfig, seed: int = 0) -> CoreModel:
    return MODEL_CLASSES[config.kind](config, seed)


def save_model(model: CoreModel, path, step: int = 0) -> None:
    checkpoint.save(path, model.kind, model.config.to_dict(), model.state_dict(), model.seed, step)


def load_model(path) -> CoreModel:
    header, params = checkpoint.load(path)
    config = ModelConfig.from_dict(header["config"])
    if config.kind != header["kind"]:
        raise checkpoint.CheckpointError(f"header kind {header['kind']!r} disagrees with config {config.kind!r}")
    model = build_model(config, header["seed"])
    model.load_state_dict(params)
    return model


class NumericError(FloatingPointError):
    pass


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of index batches drawn epoch by epoch from seeded permutations."""
    buf: list[int] = []
    while True:
        while len(buf) < batch_size:
            buf.extend(rng.permutation(n).tolist())
        yield buf[:batch_size]
        buf = buf[batch_size:]


def train(model: CoreModel, pages: Sequence[PageTree], iters: int, batch_size: int = 32, lr: float = 1e-4,
          seed: int = 0, callback: Callable[[int, float], None] | None = None) -> list[float]:
    """AdamW on ``model.loss`` for ``iters`` steps; returns the loss history."""
    if not pages:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(seed)
    opt = AdamW(model.parameters(), lr=lr)
    stream = batches(len(pages), min(batch_size, len(pages)), rng)
    history = []
    for step in range(iters):
        batch = PageBatch([pages[i] for i in next(stream)])
        opt.zero_grad()
        loss = model.loss(batch, rng)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(f"non-finite loss {value} at step {step}")
        backward(loss)
        opt.step()
        history.append(value)
        if callback is not None:
            callback(step, value)
        if step % 100 == 0:
            log.debug("step %d loss %.5f", step, value)
    return history
