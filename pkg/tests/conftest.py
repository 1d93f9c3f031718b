import os
from pathlib import Path

import numpy as np
import pytest

from commcert.graphio import Graph, GroundTruth

EMAIL_ENV = "COMMCERT_EMAIL_DIR"
EMAIL_EDGES = ("email-Eu-core.txt", "email-Eu-core.txt.gz")
EMAIL_LABELS = ("email-Eu-core-department-labels.txt", "email-Eu-core-department-labels.txt.gz")


def email_paths():
    """Edge and department-label files of the Email dataset, or None when absent."""
    root = Path(os.environ.get(EMAIL_ENV, Path(__file__).resolve().parent.parent / "data" / "email"))
    edges = next((root / n for n in EMAIL_EDGES if (root / n).exists()), None)
    labels = next((root / n for n in EMAIL_LABELS if (root / n).exists()), None)
    if edges is None or labels is None:
        return None
    return str(edges), str(labels)


def email_missing_message() -> str:
    return (
        f"Email dataset not found: set {EMAIL_ENV} to a directory holding "
        f"{EMAIL_EDGES[0]} and {EMAIL_LABELS[0]} (SNAP email-Eu-core)"
    )


def planted_partition(sizes, p_in, p_out, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    graph = Graph.from_edges(zip(iu[keep].tolist(), ju[keep].tolist()), nodes=range(n))
    gt = GroundTruth(tuple(frozenset(np.flatnonzero(labels == c).tolist()) for c in range(len(sizes))))
    return graph, gt


@pytest.fixture(scope="session")
def small_planted():
    return planted_partition([20] * 6, 0.3, 0.02, seed=1)


def write_dataset(tmp_path, graph, gt):
    edges = tmp_path / "edges.txt"
    edges.write_text("".join(f"{u} {v}\n" for u, v in sorted(graph.edges)))
    labels = tmp_path / "labels.txt"
    labels.write_text("".join(f"{u} {c}\n" for c, comm in enumerate(gt.communities) for u in sorted(comm)))
    return str(edges), str(labels)
