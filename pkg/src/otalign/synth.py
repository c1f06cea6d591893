"""Synthetic KG pairs with known entity correspondence."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from otalign.kg import KgPair, KnowledgeGraph, save_features, save_pairs, save_triplets

DATASET_FILES = {
    "triplets1": "triplets_1.tsv",
    "triplets2": "triplets_2.tsv",
    "features": "features.txt",
    "seeds": "seeds.tsv",
    "test": "test.tsv",
}


@dataclass(frozen=True)
class SynthSpec:
    entities: int = 500
    relations: int = 20
    triplets: int = 1500
    dim: int = 300
    noise: float = 0.05
    drop: float = 0.1
    seed_fraction: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.entities, self.relations, self.triplets, self.dim) < 1:
            raise ValueError("counts must be positive")
        if self.entities < 2:
            raise ValueError("need at least two entities")
        max_triplets = self.entities * (self.entities - 1) * self.relations
        if self.triplets > max_triplets:
            raise ValueError(f"at most {max_triplets} distinct triplets fit")
        for name in ("drop", "seed_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


@dataclass
class SynthDataset:
    kg: KgPair
    truth: np.ndarray  # truth[i] = G2 index of G1 entity i
    seeds: list[tuple[int, int]]
    test: list[tuple[int, int]]


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate_synthetic_pair(spec: SynthSpec = SynthSpec()) -> SynthDataset:
    rng = np.random.default_rng(spec.rng_seed)
    n = spec.entities
    seen = set()
    rows = []
    while len(rows) < spec.triplets:
        h, t = rng.integers(n, size=2)
        r = rng.integers(spec.relations)
        if h == t or (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        rows.append((h, r, t))
    t1 = np.array(rows, dtype=np.int64)

    perm = rng.permutation(n)  # G1 entity i is G2 entity perm[i]
    kept = t1[rng.random(len(t1)) >= spec.drop]
    t2 = np.stack([perm[kept[:, 0]], kept[:, 1], perm[kept[:, 2]]], axis=1).reshape(-1, 3)

    x1 = _unit_rows(rng.standard_normal((n, spec.dim)))
    x2 = np.empty_like(x1)
    x2[perm] = _unit_rows(x1 + spec.noise * rng.standard_normal((n, spec.dim)))

    g1 = KnowledgeGraph(n, spec.relations, t1)
    g2 = KnowledgeGraph(n, spec.relations, t2)
    kg = KgPair(g1, g2, np.vstack([x1, x2]))

    order = rng.permutation(n)
    n_seed = int(round(spec.seed_fraction * n))
    seeds = sorted((int(i), int(perm[i])) for i in order[:n_seed])
    test = sorted((int(i), int(perm[i])) for i in order[n_seed:])
    return SynthDataset(kg, perm, seeds, test)


def write_dataset(ds: SynthDataset, out_dir) -> dict[str, str]:
    """Write the dataset in the plain-text input formats; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, v) for k, v in DATASET_FILES.items()}
    save_triplets(ds.kg.g1, paths["triplets1"])
    save_triplets(ds.kg.g2, paths["triplets2"])
    save_features(ds.kg.features, paths["features"])
    save_pairs(ds.seeds, paths["seeds"])
    save_pairs(ds.test, paths["test"])
    return paths
