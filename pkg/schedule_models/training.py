"""
Configuration, reports and the early-stopping loop shared by the generator
and the imputer.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from schedule_attention import EncoderConfig
from schedule_numerics import AdamState, Tensor, adam_step, backward, zero_grad

logger = logging.getLogger(__name__)

REVEAL_SCHEMES = ("prefix", "none")


class NumericalError(ArithmeticError):
    """Non-finite loss during training."""


class ModelStateError(RuntimeError):
    """A model was used before it was trained or fitted."""


@dataclass(frozen=True)
class TrainingConfig:
    """
    :param learning_rate: Adam step size
    :param batch_size: sequences per optimizer step
    :param micro_batch: sequences per forward pass; gradients are accumulated
    :param max_epochs: hard cap on epochs
    :param patience: epochs without validation improvement before stopping
    :param reveal: imputer reveal scheme, "prefix" or "none"
    """

    learning_rate: float = 0.001
    batch_size: int = 64
    micro_batch: int = 4
    max_epochs: int = 200
    patience: int = 5
    reveal: str = "prefix"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.micro_batch < 1:
            raise ValueError(f"micro_batch must be positive, got {self.micro_batch}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be positive, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be positive, got {self.patience}")
        if self.reveal not in REVEAL_SCHEMES:
            raise ValueError(f"reveal must be one of {REVEAL_SCHEMES}, got {self.reveal!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        return cls(**data)


@dataclass(frozen=True)
class ModelConfig:
    """Encoder shape, embedding widths and training schedule of one model."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    state_embed_dim: int = 16
    weekday_embed_dim: int = 4
    age_embed_dim: int = 4
    occupation_embed_dim: int = 4

    def __post_init__(self):
        for name in ("state_embed_dim", "weekday_embed_dim", "age_embed_dim", "occupation_embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {
            "encoder": self.encoder.to_dict(),
            "training": self.training.to_dict(),
            "state_embed_dim": self.state_embed_dim,
            "weekday_embed_dim": self.weekday_embed_dim,
            "age_embed_dim": self.age_embed_dim,
            "occupation_embed_dim": self.occupation_embed_dim,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        encoder = EncoderConfig.from_dict(data.pop("encoder", {}))
        training = TrainingConfig.from_dict(data.pop("training", {}))
        return cls(encoder=encoder, training=training, **data)


@dataclass
class TrainReport:
    """Per-epoch curves; ``best_epoch`` is the argmin of the validation loss (1-based)."""

    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    best_epoch: int = 0
    learning_rate: float = 0.0
    wall_time: float = 0.0

    @property
    def best_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.best_epoch else float("nan")

    @property
    def best_accuracy(self) -> float:
        return self.val_accuracy[self.best_epoch - 1] if self.best_epoch else float("nan")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["best_loss"] = self.best_loss
        data["best_accuracy"] = self.best_accuracy
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainReport":
        keys = ("train_loss", "val_loss", "val_accuracy", "best_epoch", "learning_rate", "wall_time")
        return cls(**{k: data[k] for k in keys if k in data})


def frozen(params: Dict[str, Tensor]) -> Dict[str, Tensor]:
    """Views of ``params`` that do not record a graph."""
    return {name: Tensor(p.data) for name, p in params.items()}


def batches(order: np.ndarray, size: int) -> Iterable[np.ndarray]:
    """Consecutive chunks of ``order``; the last one may be short."""
    for start in range(0, len(order), size):
        yield order[start : start + size]


def accumulate_gradients(
    micro_batches: Sequence[Tuple[object, int]], loss_fn: Callable[[object], Tensor]
) -> float:
    """
    Backpropagate a batch mean loss in pieces.

    :param micro_batches: (payload, scored_count) per piece
    :param loss_fn: payload -> mean loss over its scored positions
    :return: batch mean loss
    """
    total = sum(count for _, count in micro_batches)
    if total == 0:
        return float("nan")
    value = 0.0
    for payload, count in micro_batches:
        if count == 0:
            continue
        loss = loss_fn(payload)
        weight = count / total
        if not np.isfinite(loss.data):
            raise NumericalError(f"non-finite training loss {float(loss.data)}")
        backward(loss * weight, accumulate=True)
        value += float(loss.data) * weight
    return value


def run_training(
    params: Dict[str, Tensor],
    n_train: int,
    batch_step: Callable[[np.ndarray, int], float],
    evaluate: Callable[[Dict[str, Tensor]], Tuple[float, float]],
    config: TrainingConfig,
    rng: np.random.Generator,
    verbose: bool = False,
) -> TrainReport:
    """
    Shuffle, step and early-stop. ``batch_step(indices, epoch)`` must leave the
    batch gradients in ``param.grad`` and return the batch loss;
    ``evaluate(frozen_params)`` returns (validation loss, accuracy). The
    parameters of the best epoch are restored before returning.
    """
    if n_train < 1:
        raise ValueError("training set is empty")
    log = logger.info if verbose else logger.debug
    start = time.perf_counter()
    state = AdamState(learning_rate=config.learning_rate)
    report = TrainReport(learning_rate=config.learning_rate)
    best_loss, best_params, waited = np.inf, None, 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_train)
        epoch_loss, seen = 0.0, 0
        for indices in batches(order, config.batch_size):
            zero_grad(params)
            loss = batch_step(indices, epoch)
            if np.isnan(loss):
                continue
            adam_step(state, {k: p.data for k, p in params.items()}, {k: p.grad for k, p in params.items()})
            epoch_loss += loss * len(indices)
            seen += len(indices)
        zero_grad(params)

        val_loss, val_acc = evaluate(frozen(params))
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        report.train_loss.append(epoch_loss / max(seen, 1))
        report.val_loss.append(float(val_loss))
        report.val_accuracy.append(float(val_acc))
        log("epoch %d: train %.4f, val %.4f, acc %.4f", epoch, report.train_loss[-1], val_loss, val_acc)

        if val_loss < best_loss:
            best_loss, waited = val_loss, 0
            report.best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in params.items()}
        else:
            waited += 1
            if waited >= config.patience:
                log("early stop after epoch %d (best %d)", epoch, report.best_epoch)
                break

    for k, p in params.items():
        p.data[...] = best_params[k]
    report.wall_time = time.perf_counter() - start
    return report
