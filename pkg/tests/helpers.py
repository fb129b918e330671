"""Fixture builders shared by the test modules."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from iqaboost.dataset import CATEGORIES, MANIFEST_HEADER
from iqaboost.metrics import write_scores
from iqaboost.synthetic import make_synthetic_benchmark


def write_image_database(root, n=24, size=180, seed=0, database_id="TOY"):
    """Reference/distorted PNG pairs with a manifest; returns the manifest path.

    Distortions alternate between additive noise and blur with growing
    strength; the subjective score falls with strength.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    (root / "ref").mkdir(parents=True, exist_ok=True)
    (root / "dist").mkdir(parents=True, exist_ok=True)
    refs = []
    for r in range(3):
        base = gaussian_filter(rng.uniform(0, 255, (size, size)), 3.0)
        base = (base - base.min()) / np.ptp(base) * 255
        path = f"ref/r{r}.png"
        Image.fromarray(base.astype(np.uint8)).save(root / path)
        refs.append((path, base))
    rows = [",".join(MANIFEST_HEADER)]
    for i in range(n):
        ref_path, ref = refs[i % 3]
        strength = 0.1 + 0.9 * i / (n - 1)
        if i % 2 == 0:
            dist = ref + rng.normal(0, 40 * strength, ref.shape)
            cat = "noise"
        else:
            dist = gaussian_filter(ref, 4 * strength)
            cat = "blur"
        dist = np.clip(dist, 0, 255).astype(np.uint8)
        path = f"dist/d{i:03d}.png"
        Image.fromarray(dist).save(root / path)
        score = 100 * (1 - strength) + rng.normal(0, 3)
        rows.append(f"t{i:03d},{ref_path},{path},{score!r},{cat},{database_id}")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest


def write_synthetic_study(root, runs=2, n=120, seed=0, **cfg):
    """Synthetic manifest, score file and config; returns the config path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    db, table = make_synthetic_benchmark(n=n, seed=seed)
    rows = [",".join(MANIFEST_HEADER)]
    for rec in db.records:
        rows.append(f"{rec.stimulus_id},{rec.reference_path},{rec.distorted_path},"
                    f"{rec.subjective_score!r},{rec.category},{rec.database_id}")
    (root / "syn.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    write_scores(table.to_fragment(), root / "syn_scores.csv")
    config = {"runs": runs, "registry": list(table.metric_ids),
              "manifests": {db.database_id: "syn.csv"},
              "score_files": {db.database_id: ["syn_scores.csv"]}}
    config.update(cfg)
    path = root / "config.json"
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path
