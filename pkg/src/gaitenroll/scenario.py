"""Gallery/probe enrollment scenarios and per-probe model inputs.

A scenario fixes which (id, walk) pairs form the gallery and which are
probes, at a chosen id:walk ratio. Positive probes are held-out walks of
gallery identities (label 1); negative probes are walks of identities absent
from the gallery (label 0). Sampling is a pure function of (dataset content,
spec, seed): identities and walks are sorted before any seeded shuffle, so
record order in the input never matters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError, ScenarioError
from .fileio import atomic_write_text
from .gallery import EmbeddingRecord, GallerySnapshot, NeighborSet, build_snapshot, knn
from .rng import Rng


@dataclass(frozen=True)
class ScenarioSpec:
    gallery_ids: int
    walks_per_id: int
    pos_probes: int
    neg_probes: int
    seed: int

    def __post_init__(self):
        if self.gallery_ids < 1 or self.walks_per_id < 1:
            raise ScenarioError("gallery_ids and walks_per_id must be >= 1")
        if self.pos_probes < 0 or self.neg_probes < 0:
            raise ScenarioError("probe counts must be nonnegative")

    @property
    def ratio(self) -> str:
        return f"{self.gallery_ids}:{self.walks_per_id}"


@dataclass(frozen=True)
class Scenario:
    """Resolved gallery and probe keys; labels: 1 = known identity, 0 = novel."""

    spec: ScenarioSpec
    seed: int
    gallery: tuple[tuple[str, str], ...]
    probes: tuple[tuple[str, str, int], ...]

    @property
    def gallery_id_set(self) -> set[str]:
        return {gid for gid, _ in self.gallery}


@dataclass(frozen=True, eq=False)
class EnrollmentExample:
    """One probe with its K ranked neighbors and aligned identity means."""

    probe_vec: np.ndarray
    neighbors: NeighborSet
    neighbor_id_means: tuple[np.ndarray, ...]
    label: int
    probe_id: str = ""
    probe_walk: str = ""


def _group_by_id(records: Sequence[EmbeddingRecord]) -> dict[str, list[str]]:
    by_id: dict[str, list[str]] = {}
    for rec in records:
        by_id.setdefault(rec.id, []).append(rec.walk)
    return {gid: sorted(walks) for gid, walks in sorted(by_id.items())}


def make_scenario(records: Sequence[EmbeddingRecord], spec: ScenarioSpec) -> Scenario:
    """Sample a scenario from the dataset; deterministic given (records, spec)."""
    by_id = _group_by_id(records)
    need_walks = spec.walks_per_id + (1 if spec.pos_probes > 0 else 0)
    eligible = [gid for gid, walks in by_id.items() if len(walks) >= need_walks]
    if len(eligible) < spec.gallery_ids:
        raise ScenarioError(
            f"ratio {spec.ratio}: need {spec.gallery_ids} identities with >= "
            f"{need_walks} walks, dataset has {len(eligible)}"
        )
    rng = Rng(spec.seed)
    gallery_ids = sorted(rng.choose(eligible, spec.gallery_ids))

    gallery: list[tuple[str, str]] = []
    pos_pool: list[tuple[str, str]] = []
    for gid in gallery_ids:
        walks = list(by_id[gid])
        rng.shuffle(walks)
        gallery.extend((gid, w) for w in walks[: spec.walks_per_id])
        pos_pool.extend((gid, w) for w in walks[spec.walks_per_id :])

    neg_pool = [
        (gid, w)
        for gid, walks in by_id.items()
        if gid not in set(gallery_ids)
        for w in walks
    ]
    if spec.neg_probes > 0 and not neg_pool:
        raise ScenarioError(
            f"ratio {spec.ratio}: negative probes requested but every identity "
            "is in the gallery"
        )
    if spec.pos_probes > len(pos_pool):
        raise ScenarioError(
            f"ratio {spec.ratio}: {spec.pos_probes} positive probes requested, "
            f"only {len(pos_pool)} held-out walks available"
        )
    if spec.neg_probes > len(neg_pool):
        raise ScenarioError(
            f"ratio {spec.ratio}: {spec.neg_probes} negative probes requested, "
            f"only {len(neg_pool)} non-gallery walks available"
        )
    rng.shuffle(pos_pool)
    rng.shuffle(neg_pool)
    probes = [(gid, w, 1) for gid, w in pos_pool[: spec.pos_probes]]
    probes += [(gid, w, 0) for gid, w in neg_pool[: spec.neg_probes]]
    probes.sort()
    return Scenario(
        spec=spec,
        seed=spec.seed,
        gallery=tuple(sorted(gallery)),
        probes=tuple(probes),
    )


def scenario_grid(
    records: Sequence[EmbeddingRecord],
    ratios: Sequence[tuple[int, int]],
    probe_counts: tuple[int, int],
    base_seed: int,
) -> list[Scenario]:
    """One scenario per (gallery_ids, walks_per_id) ratio, seeds base_seed + index."""
    pos, neg = probe_counts
    out = []
    for idx, (n_ids, n_walks) in enumerate(ratios):
        spec = ScenarioSpec(
            gallery_ids=n_ids,
            walks_per_id=n_walks,
            pos_probes=pos,
            neg_probes=neg,
            seed=base_seed + idx,
        )
        out.append(make_scenario(records, spec))
    return out


def assemble_example(
    snapshot: GallerySnapshot,
    probe_record: EmbeddingRecord,
    k: int,
    gallery_id_set: set[str],
) -> EnrollmentExample:
    """Look up K neighbors and their identity means; label by gallery membership."""
    if probe_record.key in snapshot.index:
        raise ScenarioError(f"probe {probe_record.key} is present in the gallery")
    neighbors = knn(snapshot, probe_record.vec, k)
    means = tuple(snapshot.means[rec.id] for rec in neighbors.records)
    return EnrollmentExample(
        probe_vec=probe_record.vec,
        neighbors=neighbors,
        neighbor_id_means=means,
        label=1 if probe_record.id in gallery_id_set else 0,
        probe_id=probe_record.id,
        probe_walk=probe_record.walk,
    )


def scenario_snapshot(
    records: Sequence[EmbeddingRecord], scenario: Scenario
) -> tuple[GallerySnapshot, list[EmbeddingRecord]]:
    """Resolve a scenario's keys against a dataset: (gallery snapshot, probe records)."""
    lookup = {rec.key: rec for rec in records}
    missing = [key for key in scenario.gallery if key not in lookup]
    if missing:
        raise ScenarioError(f"scenario gallery references unknown walks: {missing[:3]}")
    snapshot = build_snapshot([lookup[key] for key in scenario.gallery])
    probe_records = []
    for gid, walk, _label in scenario.probes:
        if (gid, walk) not in lookup:
            raise ScenarioError(f"scenario probe references unknown walk ({gid}, {walk})")
        probe_records.append(lookup[(gid, walk)])
    return snapshot, probe_records


def assemble_examples(
    records: Sequence[EmbeddingRecord], scenario: Scenario, k: int
) -> tuple[GallerySnapshot, list[EnrollmentExample]]:
    """Build one EnrollmentExample per probe of the scenario."""
    snapshot, probe_records = scenario_snapshot(records, scenario)
    id_set = scenario.gallery_id_set
    examples = [assemble_example(snapshot, rec, k, id_set) for rec in probe_records]
    for ex, (_, _, label) in zip(examples, scenario.probes):
        if ex.label != label:
            raise ScenarioError(
                f"probe ({ex.probe_id}, {ex.probe_walk}) label mismatch: "
                f"scenario says {label}, gallery membership says {ex.label}"
            )
    return snapshot, examples


def resample_scenario(
    records: Sequence[EmbeddingRecord], scenario: Scenario, new_seed: int
) -> Scenario:
    """Same spec, new seed; used for per-episode gallery resampling."""
    return make_scenario(records, replace(scenario.spec, seed=new_seed))


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "spec": {
            "gallery_ids": scenario.spec.gallery_ids,
            "walks_per_id": scenario.spec.walks_per_id,
            "pos_probes": scenario.spec.pos_probes,
            "neg_probes": scenario.spec.neg_probes,
            "seed": scenario.spec.seed,
        },
        "seed": scenario.seed,
        "gallery": [{"id": gid, "walk": w} for gid, w in scenario.gallery],
        "probes": [
            {"id": gid, "walk": w, "label": label} for gid, w, label in scenario.probes
        ],
    }


def scenario_from_dict(obj: dict) -> Scenario:
    try:
        spec = ScenarioSpec(
            gallery_ids=obj["spec"]["gallery_ids"],
            walks_per_id=obj["spec"]["walks_per_id"],
            pos_probes=obj["spec"]["pos_probes"],
            neg_probes=obj["spec"]["neg_probes"],
            seed=obj["spec"]["seed"],
        )
        gallery = tuple((g["id"], g["walk"]) for g in obj["gallery"])
        probes = tuple((p["id"], p["walk"], int(p["label"])) for p in obj["probes"])
        seed = obj["seed"]
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"malformed scenario document: {exc}") from exc
    gallery_keys = set(gallery)
    gallery_id_set = {gid for gid, _ in gallery}
    for gid, walk, label in probes:
        if (gid, walk) in gallery_keys:
            raise DataFormatError(f"probe ({gid}, {walk}) appears in the gallery")
        if label not in (0, 1):
            raise DataFormatError(f"probe ({gid}, {walk}) has label {label}")
        if label == 1 and gid not in gallery_id_set:
            raise DataFormatError(f"probe ({gid}, {walk}) labeled known but id not in gallery")
        if label == 0 and gid in gallery_id_set:
            raise DataFormatError(f"probe ({gid}, {walk}) labeled novel but id in gallery")
    return Scenario(spec=spec, seed=seed, gallery=gallery, probes=probes)


def save_scenario(path: str | Path, scenario: Scenario) -> None:
    atomic_write_text(
        path, json.dumps(scenario_to_dict(scenario), sort_keys=True, indent=2) + "\n"
    )


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    return scenario_from_dict(obj)
