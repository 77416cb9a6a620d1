"""Refinement scoring heuristics: which abstract neurons matter most.

Each scorer returns one score per neuron of the chosen layer; higher means
"restore me first". Test-set based scorers consume activations of the
*original* network at that layer, computed once and reused.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .network import LayerShape, Network

log = logging.getLogger(__name__)

POLICIES = ("centered", "allsamples", "samplerank", "singleclass",
            "majorityclassvote", "random")


@dataclass(frozen=True)
class TestSet:
    """Input points with their labels, labels drawn from {0..num_classes-1}."""

    __test__ = False  # not a test-framework class despite the name

    samples: np.ndarray       # (N, input size)
    labels: np.ndarray        # (N,)
    num_classes: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        l = np.asarray(self.labels, dtype=int)
        if s.ndim != 2 or l.shape != (s.shape[0],):
            raise ValueError("samples must be (N, n) with one label per row")
        if l.size and (l.min() < 0 or l.max() >= self.num_classes):
            raise ValueError("label out of range")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "labels", l)

    def __len__(self) -> int:
        return self.samples.shape[0]


def layer_activations(net: Network, samples: np.ndarray, layer_index: int) -> np.ndarray:
    """Matrix (N, layer size) of the layer's values for each sample."""
    return np.array([net.evaluate(s)[layer_index] for s in np.asarray(samples, float)])


def score_centered(shape: LayerShape) -> np.ndarray:
    """Negated Euclidean distance from the per-dimension center floor(d/2)."""
    center = np.array([d // 2 for d in shape.dims], dtype=float)
    scores = np.empty(shape.size)
    for i in range(shape.size):
        coords = np.array(shape.coordinates(i), dtype=float)
        scores[i] = -float(np.linalg.norm(coords - center))
    return scores


def score_all_samples(acts: np.ndarray) -> np.ndarray:
    """Mean activation over the whole test set."""
    return np.asarray(acts, dtype=float).mean(axis=0)


def score_sample_rank(net: Network, x0: np.ndarray, layer_index: int) -> np.ndarray:
    """The layer's values at the query's anchor input x0."""
    return net.evaluate(np.asarray(x0, dtype=float))[layer_index]


def score_single_class(acts: np.ndarray, test_set: TestSet,
                       target_label: int) -> np.ndarray:
    """Mean activation over samples of one class; falls back to the all-sample
    mean when the class is empty."""
    acts = np.asarray(acts, dtype=float)
    mask = test_set.labels == target_label
    if not mask.any():
        log.warning("no test samples with label %d; falling back to all-sample mean",
                    target_label)
        return score_all_samples(acts)
    return acts[mask].mean(axis=0)


def score_majority_class_vote(acts: np.ndarray, test_set: TestSet) -> np.ndarray:
    """Euclidean norm of the vector of per-class mean activations."""
    acts = np.asarray(acts, dtype=float)
    class_means = []
    for label in range(test_set.num_classes):
        mask = test_set.labels == label
        if mask.any():
            class_means.append(acts[mask].mean(axis=0))
        else:
            class_means.append(np.zeros(acts.shape[1]))
    return np.linalg.norm(np.stack(class_means), axis=0)


def score_random(size: int, seed: int) -> np.ndarray:
    """A seeded random permutation of 0..size-1 used as scores."""
    return np.random.default_rng(seed).permutation(size).astype(float)


def compute_scores(policy: str, net: Network, layer_index: int, *,
                   x0: np.ndarray | None = None,
                   test_set: TestSet | None = None,
                   seed: int = 0) -> np.ndarray:
    """Dispatch a policy by name over the original network's layer."""
    layer = net.layers[layer_index]
    if policy == "centered":
        return score_centered(layer.shape)
    if policy == "random":
        return score_random(layer.size, seed)
    if policy == "samplerank":
        if x0 is None:
            raise ValueError("samplerank needs an anchor input x0")
        return score_sample_rank(net, x0, layer_index)
    if test_set is None or len(test_set) == 0:
        raise ValueError(f"policy {policy!r} needs a non-empty test set")
    acts = layer_activations(net, test_set.samples, layer_index)
    if policy == "allsamples":
        return score_all_samples(acts)
    if policy == "singleclass":
        if x0 is None:
            raise ValueError("singleclass needs an anchor input x0")
        target = int(np.argmax(net(np.asarray(x0, dtype=float))))
        return score_single_class(acts, test_set, target)
    if policy == "majorityclassvote":
        return score_majority_class_vote(acts, test_set)
    raise ValueError(f"unknown policy {policy!r}")
