"""The abstraction-refinement loop: tighten bounds, abstract, verify, and
either lift a genuine counterexample, prove UNSAT at the abstract level, or
refine and try again.

Solve statuses record where a run terminated: ``lp_infeasible`` (the initial
LP relaxation already ruled the query out), ``all_abstract`` (decided with
every chosen neuron still abstract), ``partial_refinement`` (decided after
some refinements), ``full_network`` (fell back to the original network).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .abstraction import (NoConvolutionalPrefix, abstract, lift_cex, refine,
                          select_abstraction_layer)
from .bounds import interval_pass, lp_tighten
from .network import NeuronId
from .policies import TestSet, compute_scores
from .query import Verdict, VerificationQuery, check_concrete
from .verifier import verify

log = logging.getLogger(__name__)

LP_INFEASIBLE = "lp_infeasible"
ALL_ABSTRACT = "all_abstract"
PARTIAL_REFINEMENT = "partial_refinement"
FULL_NETWORK = "full_network"


@dataclass
class CegarConfig:
    policy: str = "centered"
    relaxation: str = "new"
    step: int = 1
    step_growth: bool = False          # 1, 2, 4, ... neurons per refinement
    timeout: float = 3600.0
    sub_timeout: float = 800.0
    seed: int = 0
    tighten: bool = True               # LP bound tightening before abstraction
    recompute_bounds: bool = False     # re-tighten after each refinement
    no_abstraction: bool = False       # direct verification only
    abstract_layer: int | None = None
    abstract_neurons: tuple[NeuronId, ...] | None = None
    x0: np.ndarray | None = None       # anchor for samplerank/singleclass
    test_set: TestSet | None = None


@dataclass
class IterationRow:
    iteration: int
    abstract_count: int
    pruned_count: int
    size_ratio: float
    sub_status: str
    time: float

    def as_dict(self) -> dict:
        return {"iteration": self.iteration, "abstract_count": self.abstract_count,
                "pruned_count": self.pruned_count, "size_ratio": self.size_ratio,
                "sub_status": self.sub_status, "time": self.time}


@dataclass
class RunReport:
    verdict: Verdict
    iterations: list[IterationRow] = field(default_factory=list)


def _finalize(verdict: Verdict, solve_status: str, t0: float,
              refinements: int, size_ratio: float) -> Verdict:
    stats = dict(verdict.stats)
    stats.update(runtime=time.monotonic() - t0, refinement_steps=refinements,
                 size_ratio=size_ratio)
    return replace(verdict, solve_status=solve_status, stats=stats)


def solve_with_abstraction(query: VerificationQuery,
                           config: CegarConfig | None = None) -> RunReport:
    """Run the full loop on a concrete-network query."""
    config = config or CegarConfig()
    net = query.network
    t0 = time.monotonic()
    global_deadline = t0 + config.timeout
    rows: list[IterationRow] = []

    if config.no_abstraction:
        verdict = verify(query, deadline=global_deadline, relaxation=config.relaxation)
        verdict = _finalize(verdict, FULL_NETWORK, t0, 0, 1.0)
        rows.append(IterationRow(0, 0, 0, 1.0, verdict.status,
                                 verdict.stats["runtime"]))
        return RunReport(verdict, rows)

    if config.tighten:
        bounds = lp_tighten(net, query.input_lo, query.input_hi,
                            query.output_constraints, relaxation=config.relaxation)
        if bounds is None:
            return RunReport(_finalize(Verdict("unsat"), LP_INFEASIBLE, t0, 0, 1.0),
                             rows)
    else:
        bounds = interval_pass(net, query.input_lo, query.input_hi)

    def verify_full(refinements: int) -> RunReport:
        verdict = verify(query, deadline=global_deadline, bounds=bounds,
                         relaxation=config.relaxation)
        verdict = _finalize(verdict, FULL_NETWORK, t0, refinements, 1.0)
        rows.append(IterationRow(len(rows), 0, 0, 1.0, verdict.status,
                                 verdict.stats["runtime"]))
        return RunReport(verdict, rows)

    if config.abstract_layer is not None:
        layer_index = config.abstract_layer
    else:
        try:
            layer_index = select_abstraction_layer(net)
        except NoConvolutionalPrefix:
            log.info("no eligible abstraction layer; verifying directly")
            return verify_full(0)

    if config.abstract_neurons is not None:
        v = frozenset(config.abstract_neurons)
    else:
        v = frozenset((layer_index, i) for i in range(net.layers[layer_index].size))
    scores = compute_scores(config.policy, net, layer_index, x0=config.x0,
                            test_set=config.test_set, seed=config.seed)
    state = abstract(net, bounds, v).with_scores(scores)
    state = replace(state, layer_index=layer_index)

    refinements = 0
    step = max(config.step, 1)
    while True:
        if time.monotonic() > global_deadline:
            return RunReport(_finalize(Verdict("timeout"),
                                       ALL_ABSTRACT if refinements == 0 else PARTIAL_REFINEMENT,
                                       t0, refinements, state.size_ratio()), rows)
        if not state.v:
            return verify_full(refinements)
        iter_t0 = time.monotonic()
        sub_deadline = min(iter_t0 + config.sub_timeout, global_deadline)
        abstract_query = query.with_network(state.abstract_net)
        verdict = verify(abstract_query, deadline=sub_deadline,
                         relaxation=config.relaxation)
        status_now = ALL_ABSTRACT if refinements == 0 else PARTIAL_REFINEMENT
        rows.append(IterationRow(len(rows), len(state.v), len(state.pruned),
                                 state.size_ratio(), verdict.status,
                                 time.monotonic() - iter_t0))
        if verdict.status == "unsat":
            return RunReport(_finalize(verdict, status_now, t0, refinements,
                                       state.size_ratio()), rows)
        if verdict.status == "timeout":
            if time.monotonic() > global_deadline:
                return RunReport(_finalize(verdict, status_now, t0, refinements,
                                           state.size_ratio()), rows)
            log.info("abstract query timed out; falling back to the full network")
            return verify_full(refinements)
        x = lift_cex(state, verdict.counterexample)
        if check_concrete(query, x):
            verdict = replace(verdict, counterexample=x)
            return RunReport(_finalize(verdict, status_now, t0, refinements,
                                       state.size_ratio()), rows)
        log.debug("spurious counterexample; refining %d neuron(s)", step)
        state = refine(state, step)
        refinements += 1
        if config.step_growth:
            step *= 2
        if config.recompute_bounds and state.v:
            new_bounds = lp_tighten(net, query.input_lo, query.input_hi,
                                    query.output_constraints, bounds=bounds,
                                    relaxation=config.relaxation)
            if new_bounds is None:
                return RunReport(_finalize(Verdict("unsat"), LP_INFEASIBLE, t0,
                                           refinements, state.size_ratio()), rows)
            bounds = new_bounds
            state = abstract(net, bounds, state.v).with_scores(scores)
            state = replace(state, layer_index=layer_index)
