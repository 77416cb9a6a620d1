"""Verification queries: an input box P, a network, and output constraints Q.

Q is a conjunction of linear constraints over the output neurons, each
canonicalized to ``expression <= 0``; a query is SAT when some input inside P
drives the outputs to satisfy every constraint, i.e. when the undesired
behavior Q describes is reachable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LinearExpr
from .network import Network

DEFAULT_INPUT_DOMAIN = (0.0, 1.0)

# Slack used when checking a counterexample against P and Q concretely.
CONCRETE_TOL = 1e-9


@dataclass(frozen=True)
class VerificationQuery:
    """⟨P, N, Q⟩: solved answers "can an input in P make the outputs satisfy Q?".

    ``output_constraints`` are LinearExpr over output indices, each read as
    ``expr <= 0``. For abstract networks the promoted neurons' boxes live on
    the network itself; P here covers only the original inputs.
    """

    network: Network
    input_lo: np.ndarray
    input_hi: np.ndarray
    output_constraints: tuple[LinearExpr, ...]

    def __post_init__(self):
        lo = np.asarray(self.input_lo, dtype=float)
        hi = np.asarray(self.input_hi, dtype=float)
        n = self.network.input_size
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError(f"input box must have {n} entries")
        if np.any(lo > hi):
            raise ValueError("input box has crossed bounds")
        object.__setattr__(self, "input_lo", lo)
        object.__setattr__(self, "input_hi", hi)
        object.__setattr__(self, "output_constraints", tuple(self.output_constraints))
        m = self.network.output_size
        for expr in self.output_constraints:
            if any(not 0 <= i < m for i in expr.coeffs):
                raise ValueError("output constraint references a non-output index")

    def with_network(self, network: Network) -> "VerificationQuery":
        """Same P and Q over another network with the same input/output sizes."""
        return VerificationQuery(network, self.input_lo, self.input_hi,
                                 self.output_constraints)


@dataclass
class Verdict:
    status: str                      # "sat" | "unsat" | "timeout"
    counterexample: np.ndarray | None = None
    solve_status: str | None = None  # "lp_infeasible" | "all_abstract" |
                                     # "partial_refinement" | "full_network"
    stats: dict = field(default_factory=dict)

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"


def build_adversarial(net: Network, x0: np.ndarray, eps: float,
                      domain: tuple[float, float] = DEFAULT_INPUT_DOMAIN
                      ) -> VerificationQuery:
    """Targeted robustness query: can the runner-up label overtake the
    predicted one anywhere in the l∞ ball of radius eps around x0?

    P is the ball clipped to the input domain; Q is the single constraint
    y_{j0} − y_{j0s} <= 0 with j0 the predicted label at x0 and j0s the
    second-highest (argmax ties broken by lowest index).
    """
    if net.output_size < 2:
        raise ValueError("adversarial query needs at least two outputs")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    x0 = np.asarray(x0, dtype=float)
    y0 = net(x0)
    j0 = int(np.argmax(y0))
    rest = [j for j in range(y0.size) if j != j0]
    j0s = rest[int(np.argmax(y0[rest]))]
    lo = np.maximum(x0 - eps, domain[0])
    hi = np.minimum(x0 + eps, domain[1])
    q = LinearExpr({j0: 1.0, j0s: -1.0})
    return VerificationQuery(net, lo, hi, (q,))


def check_concrete(query: VerificationQuery, x: np.ndarray,
                   tol: float = CONCRETE_TOL) -> bool:
    """Is x a genuine counterexample: inside P (and the promoted boxes for
    abstract networks) and satisfying every Q constraint on the concrete
    network evaluation?"""
    net = query.network
    x = np.asarray(x, dtype=float)
    if x.shape != (net.extended_input_size,):
        return False
    n = net.input_size
    if np.any(x[:n] < query.input_lo - tol) or np.any(x[:n] > query.input_hi + tol):
        return False
    for val, nid in zip(x[n:], net.promoted_ids):
        plo, phi = net.promoted[nid]
        if val < plo - tol or val > phi + tol:
            return False
    y = net(x)
    return all(expr.value(y) <= tol for expr in query.output_constraints)
