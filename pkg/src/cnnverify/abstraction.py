"""Over-approximating abstraction: cut a neuron's incoming edges, make it a
bounded input, and prune whatever loses its path to the output.

Any input the original network accepts stays feasible for the abstract
network when each promoted neuron is fed its original value, so an UNSAT
answer on the abstraction carries over to the original network. A SAT answer
does not and must be re-checked concretely.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bounds import Bounds
from .network import (ConvolutionLayer, MaxPoolLayer, Network, NeuronId,
                      ReluLayer, WeightedSumLayer)


class NoConvolutionalPrefix(Exception):
    """No convolution/pooling layer free of a fully-connected prefix exists."""


def select_abstraction_layer(net: Network) -> int:
    """Deepest convolution or max-pooling layer that has no fully-connected
    layer anywhere before it. Weighted sums standing in for lowered structured
    layers (tagged) do not count as fully-connected."""
    best = None
    for lid, layer in enumerate(net.layers[1:-1], start=1):
        is_candidate = isinstance(layer, (ConvolutionLayer, MaxPoolLayer)) or (
            isinstance(layer, WeightedSumLayer) and layer.tag == "conv")
        if is_candidate:
            best = lid
        if isinstance(layer, WeightedSumLayer) and layer.tag is None:
            break
    if best is None:
        raise NoConvolutionalPrefix(
            "no convolution or pooling layer without a fully-connected prefix")
    return best


def _dependencies(net: Network, nid: NeuronId) -> list[NeuronId]:
    """Previous-layer neurons feeding nid (empty for inputs and promoted)."""
    lid, idx = nid
    if lid == 0 or nid in net.promoted:
        return []
    layer = net.layers[lid]
    if isinstance(layer, WeightedSumLayer):
        return [(lid - 1, j) for j in np.flatnonzero(layer.weights[idx])]
    if isinstance(layer, ConvolutionLayer):
        return [(lid - 1, idx + j) for j in range(layer.kernel.size)]
    if isinstance(layer, ReluLayer):
        return [(lid - 1, idx)]
    if isinstance(layer, MaxPoolLayer):
        return [(lid - 1, j) for j in layer.pool(idx)]
    raise ValueError(f"unknown layer kind {layer.kind}")


def compute_pruned(net: Network) -> frozenset[NeuronId]:
    """Hidden, non-promoted neurons with no remaining path to any output."""
    out_lid = len(net.layers) - 1
    reachable: set[NeuronId] = set()
    frontier = [(out_lid, i) for i in range(net.layers[out_lid].size)]
    while frontier:
        nid = frontier.pop()
        if nid in reachable:
            continue
        reachable.add(nid)
        frontier.extend(_dependencies(net, nid))
    pruned = set()
    for lid in range(1, out_lid):
        for idx in range(net.layers[lid].size):
            nid = (lid, idx)
            if nid not in reachable and nid not in net.promoted:
                pruned.add(nid)
    return frozenset(pruned)


@dataclass(frozen=True)
class AbstractionState:
    """One abstraction of an original network: which neurons are promoted (V),
    their input boxes, what got pruned, and the refinement ordering."""

    original_net: Network
    abstract_net: Network
    layer_index: int
    v: frozenset[NeuronId]
    p_b: dict[NeuronId, tuple[float, float]]
    scores: np.ndarray | None = None   # per flat index of the abstraction layer

    @property
    def pruned(self) -> frozenset[NeuronId]:
        return self.abstract_net.pruned

    @property
    def refinement_order(self) -> list[NeuronId]:
        """Current V sorted so the last entry is the next neuron to restore
        (highest score, ties broken toward the lowest index)."""
        def key(nid: NeuronId):
            score = 0.0 if self.scores is None else float(self.scores[nid[1]])
            return (score, -nid[1])
        return sorted(self.v, key=key)

    def with_scores(self, scores: np.ndarray) -> "AbstractionState":
        scores = np.asarray(scores, dtype=float)
        if scores.shape != (self.original_net.layers[self.layer_index].size,):
            raise ValueError("scores must cover the abstraction layer")
        return replace(self, scores=scores)

    def size_ratio(self) -> float:
        return self.abstract_net.neuron_count() / self.original_net.neuron_count()


def abstract(net: Network, bounds: Bounds, v) -> AbstractionState:
    """Promote the neurons of V to bounded inputs and prune the fallout.

    ``bounds`` supplies each promoted neuron's input box and must be finite
    there. V must live in a single hidden layer; an empty V yields the
    identity abstraction.
    """
    if net.promoted or net.pruned:
        raise ValueError("abstract() expects the original, concrete network")
    v = frozenset(v)
    if not v:
        return AbstractionState(net, net, -1, v, {})
    layers = {lid for lid, _ in v}
    if len(layers) != 1:
        raise ValueError("abstract neurons must come from a single layer")
    (layer_index,) = layers
    if not 0 < layer_index < len(net.layers) - 1:
        raise ValueError("abstraction layer must be hidden")
    p_b = {}
    for nid in v:
        lo, hi = bounds.get(nid)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError(f"promoted neuron {nid} needs finite bounds")
        p_b[nid] = (lo, hi)
    promoted_net = Network(layers=net.layers, name=net.name, promoted=p_b)
    pruned = compute_pruned(promoted_net)
    abstract_net = Network(layers=net.layers, name=net.name,
                           promoted=p_b, pruned=pruned)
    return AbstractionState(net, abstract_net, layer_index, v, p_b)


def refine(state: AbstractionState, count: int = 1) -> AbstractionState:
    """Restore the ``count`` highest-score neurons of V and rebuild."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if not state.v:
        raise ValueError("nothing left to refine; already at the full network")
    order = state.refinement_order
    kept = order[:max(len(order) - count, 0)]
    new_state = abstract(state.original_net,
                         _bounds_view(state), frozenset(kept))
    if state.scores is not None and new_state.v:
        new_state = new_state.with_scores(state.scores)
    return replace(new_state, layer_index=state.layer_index, scores=state.scores)


def _bounds_view(state: AbstractionState) -> Bounds:
    """A bounds object exposing exactly the stored promoted boxes."""
    b = Bounds.empty(state.original_net)
    for nid, (lo, hi) in state.p_b.items():
        b.set(nid, lo, hi)
    return b


def lift_cex(state: AbstractionState | Network, abstract_cex: np.ndarray) -> np.ndarray:
    """Drop the promoted-input entries, keeping the original input vector."""
    net = state.abstract_net if isinstance(state, AbstractionState) else state
    abstract_cex = np.asarray(abstract_cex, dtype=float)
    if abstract_cex.shape != (net.extended_input_size,):
        raise ValueError("counterexample must assign every abstract input")
    return abstract_cex[: net.input_size].copy()
