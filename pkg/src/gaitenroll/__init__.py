"""Open-set gait enrollment over identity-labeled embeddings.

Given a probe embedding and a gallery of enrolled walks, decide whether the
probe belongs to an already-enrolled identity or a novel one. The decision
model is a set-attention classifier over the probe, its K nearest gallery
neighbors, and the neighbors' per-identity mean embeddings; a tuned
distance-threshold baseline, scenario construction, training, metrics, and a
synthetic data generator make the whole pipeline verifiable end to end.
"""

from .autodiff import Tensor, bce_with_logits, gradients
from .baseline import BaselineConfig, baseline_fit_eval, baseline_score
from .gallery import (
    EmbeddingRecord,
    GallerySnapshot,
    NeighborSet,
    add_record,
    build_snapshot,
    knn,
    load_embeddings,
    make_record,
    save_embeddings,
)
from .metrics import (
    Confusion,
    average_precision,
    best_threshold,
    confusion,
    f1,
    mcc,
    roc_auc,
)
from .model import (
    SCHEMES,
    EnrollModel,
    ModelConfig,
    TokenSequence,
    build_tokens,
    forward,
    init_model,
    parameter_count,
    predict,
)
from .optim import AdamState, adam_step
from .rng import Rng
from .scenario import (
    EnrollmentExample,
    Scenario,
    ScenarioSpec,
    assemble_example,
    assemble_examples,
    make_scenario,
    scenario_grid,
)
from .synth import SynthSpec, gen_synthetic
from .train import TrainConfig, TrainResult, augment, train

__version__ = "0.1.0"
