"""Synthetic benchmark: estimator columns driven by two latent quality factors."""

from __future__ import annotations

import numpy as np

from .dataset import CATEGORIES, make_database
from .metrics import ScoreTable

# (latent mix weight on factor 1, noise sd) per synthetic estimator
SYNTHETIC_ESTIMATORS = (
    ("S1", 1.0, 0.06),
    ("S2", 0.0, 0.06),
    ("S3", 0.5, 0.10),
    ("S4", 1.0, 0.15),
    ("S5", 0.0, 0.15),
)


def make_synthetic_benchmark(n=500, seed=0, noise=2.0, database_id="SYN"):
    """Database and score table where the subjective score needs two factors.

    The score is a saturating product of two latent factors (small when
    either factor is small), so no single column, nor any monotone map of a
    linear combination of columns, explains it fully.
    """
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.0, 1.0, size=(n, 2))
    clean = 100.0 * q[:, 0] * q[:, 1] / (q[:, 0] + q[:, 1] + 0.1)
    y = clean + noise * rng.normal(size=n)
    cols = []
    for _, w, sd in SYNTHETIC_ESTIMATORS:
        cols.append(w * q[:, 0] + (1.0 - w) * q[:, 1] + sd * rng.normal(size=n))
    X = np.column_stack(cols)
    ids = [f"s{i:04d}" for i in range(n)]
    records = [(sid, f"ref/{i % 25:02d}.png", f"dist/{sid}.png", float(y[i]),
                CATEGORIES[i % len(CATEGORIES)]) for i, sid in enumerate(ids)]
    db = make_database(database_id, records)
    table = ScoreTable(ids, [name for name, _, _ in SYNTHETIC_ESTIMATORS], X)
    return db, table
