"""Set-attention enrollment classifier.

The input set is the probe embedding, its K nearest gallery neighbors, and
the per-identity mean embedding of each neighbor. Three schemes bind a
neighbor to its identity mean:

  additive      - neighbor and identity mean are summed in embedding space
                  before projection; K+1 tokens, no positional vectors.
  per_instance  - neighbor k and its identity mean both receive learned
                  positional vector k; 2K+1 tokens.
  per_identity  - like per_instance, but neighbors sharing an identity share
                  one positional vector (index = first-appearance rank of the
                  identity in the neighbor list).

Token 0 is always the probe and never carries a positional vector. A stack
of pre-norm self-attention blocks runs over the token set and a two-layer
head reads the encoder output at the probe position; the logit's sigmoid is
the probability that the probe's identity is already enrolled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericError
from .rng import Rng
from .scenario import EnrollmentExample

SCHEMES = ("additive", "per_instance", "per_identity")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    dropout_rate: float = 0.1
    k: int = 8
    scheme: str = "per_instance"
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive")
        if self.d_model < 2 or self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be >= 2 and divisible by n_heads ({self.n_heads})"
            )
        if self.n_layers < 1 or self.n_heads < 1 or self.d_ff < 1:
            raise ConfigError("n_layers, n_heads and d_ff must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "dropout_rate": self.dropout_rate,
            "k": self.k,
            "scheme": self.scheme,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


def parameter_manifest(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Fixed (name, shape) order of every parameter tensor; checkpoint layout."""
    d, dm, dff = config.input_dim, config.d_model, config.d_ff
    entries: list[tuple[str, tuple[int, ...]]] = [
        ("proj.weight", (d, dm)),
        ("proj.bias", (dm,)),
        ("pos.table", (config.k, dm)),
    ]
    for i in range(config.n_layers):
        entries += [
            (f"block{i}.ln1.gain", (dm,)),
            (f"block{i}.ln1.bias", (dm,)),
            (f"block{i}.attn.wq", (dm, dm)),
            (f"block{i}.attn.bq", (dm,)),
            (f"block{i}.attn.wk", (dm, dm)),
            (f"block{i}.attn.bk", (dm,)),
            (f"block{i}.attn.wv", (dm, dm)),
            (f"block{i}.attn.bv", (dm,)),
            (f"block{i}.attn.wo", (dm, dm)),
            (f"block{i}.attn.bo", (dm,)),
            (f"block{i}.ln2.gain", (dm,)),
            (f"block{i}.ln2.bias", (dm,)),
            (f"block{i}.ff.w1", (dm, dff)),
            (f"block{i}.ff.b1", (dff,)),
            (f"block{i}.ff.w2", (dff, dm)),
            (f"block{i}.ff.b2", (dm,)),
        ]
    entries += [
        ("head.w1", (dm, dm)),
        ("head.b1", (dm,)),
        ("head.w2", (dm, 1)),
        ("head.b2", (1,)),
    ]
    return entries


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in parameter_manifest(config))


class EnrollModel:
    """Parameter container; all learnable tensors keyed by manifest name."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        self._probe_pick: dict[int, Tensor] = {}

    def parameters(self) -> list[Tensor]:
        return [self.params[name] for name, _ in parameter_manifest(self.config)]

    def probe_pick(self, n_tokens: int) -> Tensor:
        """Cached 1 x T one-hot selector for the probe row."""
        sel = self._probe_pick.get(n_tokens)
        if sel is None:
            row = np.zeros((1, n_tokens))
            row[0, 0] = 1.0
            sel = Tensor(row)
            self._probe_pick[n_tokens] = sel
        return sel

    def copy_param_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            t.data = arrays[name].copy()


def init_model(config: ModelConfig) -> EnrollModel:
    """Gaussian(0, 0.02^2) weights and positional vectors, zero biases, unit
    layer-norm gains; a single seeded stream in manifest order."""
    rng = Rng(config.seed)
    params: dict[str, Tensor] = {}
    for name, shape in parameter_manifest(config):
        short = name.rsplit(".", 1)[-1]
        if short in ("bias", "bq", "bk", "bv", "bo", "b1", "b2"):
            data = np.zeros(shape)
        elif short == "gain":
            data = np.ones(shape)
        else:
            data = 0.02 * rng.gaussians(int(np.prod(shape))).reshape(shape)
        params[name] = Tensor(data, requires_grad=True)
    return EnrollModel(config, params)


@dataclass(frozen=True)
class TokenSequence:
    """Projected input tokens (T x d_model); token 0 is the probe."""

    tokens: Tensor
    probe_index: int = 0

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]


def position_indices(neighbor_ids: Sequence[str], scheme: str) -> list[int]:
    """Positional-table row per neighbor: its rank under per_instance, the
    first-appearance rank of its identity under per_identity."""
    if scheme == "per_instance":
        return list(range(len(neighbor_ids)))
    if scheme == "per_identity":
        ranks: dict[str, int] = {}
        out = []
        for gid in neighbor_ids:
            if gid not in ranks:
                ranks[gid] = len(ranks)
            out.append(ranks[gid])
        return out
    raise ConfigError(f"scheme '{scheme}' does not use positional vectors")


def build_tokens(
    example: EnrollmentExample, model: EnrollModel, scheme: str | None = None
) -> TokenSequence:
    """Assemble the model's token matrix for one example."""
    config = model.config
    scheme = config.scheme if scheme is None else scheme
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got '{scheme}'")
    k = config.k
    if len(example.neighbors) != k:
        raise ConfigError(
            f"example has {len(example.neighbors)} neighbors, model expects {k}"
        )
    neigh = np.stack([rec.vec for rec in example.neighbors.records])
    means = np.stack(example.neighbor_id_means)
    probe = example.probe_vec[None, :]
    w, b = model.params["proj.weight"], model.params["proj.bias"]
    if scheme == "additive":
        raw = np.vstack([probe, neigh + means])
        return TokenSequence(tokens=ad.add(ad.matmul(Tensor(raw), w), b))
    raw = np.vstack([probe, neigh, means])
    projected = ad.add(ad.matmul(Tensor(raw), w), b)
    idx = position_indices([rec.id for rec in example.neighbors.records], scheme)
    assign = np.zeros((k, k))
    assign[np.arange(k), idx] = 1.0
    pos_rows = ad.matmul(Tensor(assign), model.params["pos.table"])
    pos_full = ad.concat(
        [Tensor(np.zeros((1, config.d_model))), pos_rows, pos_rows], axis=0
    )
    return TokenSequence(tokens=ad.add(projected, pos_full))


def _dropout(x: Tensor, rate: float, rng: Rng) -> Tensor:
    keep = rng.uniforms(x.size).reshape(x.shape) >= rate
    return ad.mul(x, Tensor(keep / (1.0 - rate)))


def forward(
    model: EnrollModel,
    seq: TokenSequence,
    train_mode: bool = False,
    rng: Rng | None = None,
) -> Tensor:
    """Run the encoder and head; returns the logit as a (1,) tensor.

    Dropout (inverted, on each residual branch) is applied only in train
    mode; draw order is attention branch then feed-forward branch, block by
    block.
    """
    config = model.config
    rate = config.dropout_rate if train_mode else 0.0
    if rate > 0.0 and rng is None:
        raise ConfigError("train-mode forward with dropout requires an rng")
    p = model.params
    x = seq.tokens
    for i in range(config.n_layers):
        h = ad.layer_norm(x, p[f"block{i}.ln1.gain"], p[f"block{i}.ln1.bias"])
        q = ad.add(ad.matmul(h, p[f"block{i}.attn.wq"]), p[f"block{i}.attn.bq"])
        k = ad.add(ad.matmul(h, p[f"block{i}.attn.wk"]), p[f"block{i}.attn.bk"])
        v = ad.add(ad.matmul(h, p[f"block{i}.attn.wv"]), p[f"block{i}.attn.bv"])
        ctx = ad.add(
            ad.matmul(
                ad.multi_head_attention(q, k, v, config.n_heads),
                p[f"block{i}.attn.wo"],
            ),
            p[f"block{i}.attn.bo"],
        )
        if rate > 0.0:
            ctx = _dropout(ctx, rate, rng)
        x = ad.add(x, ctx)
        h2 = ad.layer_norm(x, p[f"block{i}.ln2.gain"], p[f"block{i}.ln2.bias"])
        ff = ad.add(
            ad.matmul(
                ad.relu(ad.add(ad.matmul(h2, p[f"block{i}.ff.w1"]), p[f"block{i}.ff.b1"])),
                p[f"block{i}.ff.w2"],
            ),
            p[f"block{i}.ff.b2"],
        )
        if rate > 0.0:
            ff = _dropout(ff, rate, rng)
        x = ad.add(x, ff)
    probe_out = ad.matmul(model.probe_pick(seq.n_tokens), x)
    hidden = ad.relu(ad.add(ad.matmul(probe_out, p["head.w1"]), p["head.b1"]))
    logit = ad.add(ad.matmul(hidden, p["head.w2"]), p["head.b2"])
    return ad.reshape(logit, (1,))


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def example_logit(model: EnrollModel, example: EnrollmentExample) -> float:
    """Eval-mode logit for one example (no dropout, no augmentation)."""
    out = forward(model, build_tokens(example, model), train_mode=False)
    value = out.item()
    if not math.isfinite(value):
        raise NumericError("non-finite logit")
    return value


def predict(model: EnrollModel, example: EnrollmentExample) -> tuple[float, int]:
    """(probability, decision); decision 1 means the identity is already enrolled."""
    prob = _sigmoid_scalar(example_logit(model, example))
    return prob, 1 if prob >= 0.5 else 0
