"""Training loop for the enrollment classifier.

Examples come from gallery/probe scenarios; during training each input
vector (probe, neighbors, identity means) gets Gaussian noise scaled to the
gallery's mean vector norm plus independent coordinate dropout. Validation
MCC at threshold 0.5 drives best-checkpoint selection and early stopping.
Everything stochastic draws from one seeded stream in a fixed order, so two
runs with the same configs produce identical models.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericError, ScenarioError, TrainingDivergedError
from .gallery import EmbeddingRecord, GallerySnapshot
from .metrics import confusion, mcc, roc_auc
from .model import (
    EnrollModel,
    ModelConfig,
    _sigmoid_scalar,
    build_tokens,
    example_logit,
    forward,
    init_model,
)
from .optim import AdamState, adam_step
from .rng import Rng
from .scenario import (
    EnrollmentExample,
    Scenario,
    assemble_examples,
    resample_scenario,
)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 5
    noise_std_rel: float = 0.05
    episodes_per_epoch: int = 1
    pos_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.lr, self.eps, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("lr, eps, batch_size, max_epochs and patience must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.noise_std_rel < 0 or self.pos_weight <= 0 or self.episodes_per_epoch < 1:
            raise ValueError("bad noise_std_rel / pos_weight / episodes_per_epoch")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def augment(
    example: EnrollmentExample,
    rng: Rng,
    noise_std_rel: float,
    dropout_rate: float,
    ref_norm: float | None = None,
) -> EnrollmentExample:
    """Train-time input perturbation; the label is unchanged.

    Gaussian noise with std = noise_std_rel * ref_norm is added to the probe,
    every neighbor, and every identity mean; then each coordinate is zeroed
    independently with probability dropout_rate. ref_norm defaults to the
    mean norm of the example's own neighbors; the trainer passes the
    gallery-wide mean. Draw order: one noise block, then one dropout block.
    """
    stacked = np.vstack(
        [example.probe_vec[None, :]]
        + [rec.vec[None, :] for rec in example.neighbors.records]
        + [m[None, :] for m in example.neighbor_id_means]
    )
    if ref_norm is None:
        k = len(example.neighbors)
        ref_norm = float(np.linalg.norm(stacked[1 : 1 + k], axis=1).mean())
    noise_std = noise_std_rel * ref_norm
    if noise_std > 0.0:
        stacked = stacked + noise_std * rng.gaussians(stacked.size).reshape(stacked.shape)
    if dropout_rate > 0.0:
        keep = rng.uniforms(stacked.size).reshape(stacked.shape) >= dropout_rate
        stacked = stacked * keep
    k = len(example.neighbors)
    new_records = tuple(
        dataclasses.replace(rec, vec=stacked[1 + i])
        for i, rec in enumerate(example.neighbors.records)
    )
    new_neighbors = dataclasses.replace(
        example.neighbors,
        entries=tuple(
            (rec, dist) for rec, (_, dist) in zip(new_records, example.neighbors.entries)
        ),
    )
    return dataclasses.replace(
        example,
        probe_vec=stacked[0],
        neighbors=new_neighbors,
        neighbor_id_means=tuple(stacked[1 + k + i] for i in range(k)),
    )


def bce_with_logits(logit: float, label: int) -> float:
    """Scalar convenience form of the stable batched loss."""
    t = ad.bce_with_logits(Tensor([float(logit)]), np.array([float(label)]))
    return t.item()


@dataclass
class TrainResult:
    model: EnrollModel
    history: list[dict]
    best_epoch: int
    best_val_mcc: float


def evaluate_examples(
    model: EnrollModel, examples: Sequence[EnrollmentExample], threshold: float = 0.5
) -> dict:
    """Eval-mode scores and fixed-threshold metrics over a list of examples."""
    labels = [ex.label for ex in examples]
    scores = [_sigmoid_scalar(example_logit(model, ex)) for ex in examples]
    decisions = [1 if s >= threshold else 0 for s in scores]
    conf = confusion(labels, decisions)
    out = {"mcc": mcc(conf), "confusion": conf, "scores": scores, "labels": labels}
    if 0 < sum(labels) < len(labels):
        out["auc"] = roc_auc(scores, labels)
    else:
        out["auc"] = float("nan")
    return out


def _scenario_ids(scenario: Scenario) -> set[str]:
    ids = {gid for gid, _ in scenario.gallery}
    ids.update(gid for gid, _, _ in scenario.probes)
    return ids


def train(
    records: Sequence[EmbeddingRecord],
    model_config: ModelConfig,
    train_scenarios: Sequence[Scenario],
    val_scenario: Scenario,
    train_config: TrainConfig,
) -> TrainResult:
    """Minibatch Adam on mean BCE over scenario-derived examples.

    Per epoch: assemble, augment, shuffle, step; then validate at threshold
    0.5 and keep the best-MCC parameters. Stops after `patience` epochs
    without improvement. With episodes_per_epoch == 1 the given scenarios are
    used as-is every epoch; with more, every episode re-samples fresh
    galleries from the training identity pool (the given scenarios act as
    ratio and probe-count templates), so enrolled/novel status of an identity
    varies across episodes and cannot be memorized.
    """
    if not train_scenarios:
        raise ScenarioError("no training scenarios given")
    train_ids: set[str] = set()
    for sc in train_scenarios:
        train_ids |= _scenario_ids(sc)
    overlap = train_ids & _scenario_ids(val_scenario)
    if overlap:
        raise ScenarioError(
            f"validation identities overlap training identities: {sorted(overlap)[:5]}"
        )

    model = init_model(model_config)
    params = model.parameters()
    adam = AdamState.for_params(
        params,
        lr=train_config.lr,
        beta1=train_config.beta1,
        beta2=train_config.beta2,
        eps=train_config.eps,
    )
    rng = Rng(train_config.seed)
    k = model_config.k

    # Identity pool for episode resampling: everything the train scenarios touch.
    pool_records = [rec for rec in records if rec.id in train_ids]

    base: list[tuple[GallerySnapshot, list[EnrollmentExample]]] = [
        assemble_examples(records, sc, k) for sc in train_scenarios
    ]
    _, val_examples = assemble_examples(records, val_scenario, k)

    history: list[dict] = []
    best_arrays = model.copy_param_arrays()
    best_mcc = -math.inf
    best_epoch = 0
    stale = 0
    for epoch in range(1, train_config.max_epochs + 1):
        epoch_examples: list[EnrollmentExample] = []
        for si, sc in enumerate(train_scenarios):
            for episode in range(train_config.episodes_per_epoch):
                if train_config.episodes_per_epoch == 1:
                    snapshot, examples = base[si]
                else:
                    resampled = resample_scenario(
                        pool_records,
                        sc,
                        sc.spec.seed + 7919 * epoch + 104729 * (episode + 1),
                    )
                    snapshot, examples = assemble_examples(pool_records, resampled, k)
                ref_norm = snapshot.mean_vector_norm
                epoch_examples.extend(
                    augment(
                        ex,
                        rng,
                        train_config.noise_std_rel,
                        model_config.dropout_rate,
                        ref_norm,
                    )
                    for ex in examples
                )
        order = list(range(len(epoch_examples)))
        rng.shuffle(order)

        epoch_loss = 0.0
        n_seen = 0
        for start in range(0, len(order), train_config.batch_size):
            chunk = order[start : start + train_config.batch_size]
            try:
                logits = ad.concat(
                    [
                        forward(
                            model,
                            build_tokens(epoch_examples[i], model),
                            train_mode=True,
                            rng=rng,
                        )
                        for i in chunk
                    ],
                    axis=0,
                )
                labels = np.array([float(epoch_examples[i].label) for i in chunk])
                losses = ad.bce_with_logits(logits, labels)
                if train_config.pos_weight != 1.0:
                    weights = np.where(labels == 1.0, train_config.pos_weight, 1.0)
                    losses = ad.mul(losses, Tensor(weights))
                loss = ad.mean_all(losses)
                grads = ad.gradients(loss, params)
            except NumericError as exc:
                raise TrainingDivergedError(
                    f"non-finite values at epoch {epoch}, "
                    f"batch {start // train_config.batch_size}: {exc}"
                ) from exc
            adam_step(adam, params, grads)
            epoch_loss += loss.item() * len(chunk)
            n_seen += len(chunk)

        val = evaluate_examples(model, val_examples)
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(n_seen, 1),
                "val_mcc": val["mcc"],
                "val_auc": val["auc"],
            }
        )
        if val["mcc"] > best_mcc:
            best_mcc = val["mcc"]
            best_epoch = epoch
            best_arrays = model.copy_param_arrays()
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                break

    model.load_param_arrays(best_arrays)
    return TrainResult(
        model=model, history=history, best_epoch=best_epoch, best_val_mcc=best_mcc
    )
