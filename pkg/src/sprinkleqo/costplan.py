"""Size estimation, operator costing, and plan extraction.

One convention is used everywhere: an operator's cost is the work of
consuming its inputs (a join costs |A|*|B|, every unary operator costs the
size of its input) and a plan's cost is the sum of its operator costs.  The
result-size term of the classic select-after-join comparison shows up
naturally as the consuming operator's input, so it is accounted exactly once.

Sizes are real-valued estimates; nothing is rounded except for display.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import memo
from .errors import DagError, LimitExceededError
from .memo import (Dag, Signature, KIND_JOIN, KIND_JOINFILTER, KIND_SELECT,
                   KIND_PROJECT, KIND_GROUPBY, KIND_HAVING, KIND_ORDERBY)


def estimate_size(kind: str, inputs: tuple[float, ...], factor: float | None = None) -> float:
    """Estimated output size of one operator application.

    join: jsf*|A|*|B|; select/having: ssf*|A|; joinfilter: jsf*|A|;
    groupby: min(distinct product, |A|); project/orderby: |A|.
    """
    if kind == KIND_JOIN:
        a, b = inputs
        return float(factor) * a * b
    (a,) = inputs
    if kind in (KIND_SELECT, KIND_HAVING, KIND_JOINFILTER):
        return float(factor) * a
    if kind == KIND_GROUPBY:
        return min(float(factor), a)
    if kind in (KIND_PROJECT, KIND_ORDERBY):
        return a
    raise DagError(f"unknown op kind {kind!r}")


def op_cost(kind: str, inputs: tuple[float, ...]) -> float:
    """Cost of one operator application under the shared convention."""
    if kind == KIND_JOIN:
        a, b = inputs
        return a * b
    if kind in memo.UNARY_KINDS:
        (a,) = inputs
        return a
    raise DagError(f"unknown op kind {kind!r}")


@dataclass(frozen=True)
class Plan:
    """One fully expanded operator tree with per-node size and cost."""

    kind: str  # 'base' or an op kind
    detail: str
    relation: str | None
    children: tuple["Plan", ...]
    factor: float | None
    est_size: float
    op_cost: float
    cum_cost: float

    def to_doc(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.kind == "base":
            doc["relation"] = self.relation
        else:
            doc["predicate"] = self.detail
        doc["est_size"] = self.est_size
        doc["op_cost"] = self.op_cost
        doc["cum_cost"] = self.cum_cost
        if self.children:
            doc["children"] = [c.to_doc() for c in self.children]
        return doc


def base_plan(relation: str, cardinality: float) -> Plan:
    return Plan(kind="base", detail="", relation=relation, children=(),
                factor=None, est_size=float(cardinality), op_cost=0.0, cum_cost=0.0)


def op_plan(kind: str, detail: str, children: tuple[Plan, ...],
            factor: float | None = None) -> Plan:
    sizes = tuple(c.est_size for c in children)
    cost = op_cost(kind, sizes)
    return Plan(kind=kind, detail=detail, relation=None, children=children,
                factor=factor, est_size=estimate_size(kind, sizes, factor),
                op_cost=cost, cum_cost=cost + sum(c.cum_cost for c in children))


def plan_key(plan: Plan) -> str:
    """Canonical text of a plan tree, used for deterministic ordering."""
    if plan.kind == "base":
        return f"(base {plan.relation})"
    inner = " ".join(plan_key(c) for c in plan.children)
    return f"({plan.kind} [{plan.detail}] {inner})"


# -- plans <-> memo ---------------------------------------------------------

def plan_signature(plan: Plan) -> Signature:
    if plan.kind == "base":
        return memo.base_signature(plan.relation)
    if plan.kind == KIND_JOIN:
        return memo.join_signature(plan_signature(plan.children[0]),
                                   plan_signature(plan.children[1]), plan.detail)
    return memo.extend_signature(plan_signature(plan.children[0]), plan.kind, plan.detail)


def intern_plan(dag: Dag, plan: Plan) -> int:
    """Intern every node of a plan tree into the memo; returns the root eq-node."""

    def walk(node: Plan) -> tuple[int, Signature]:
        if node.kind == "base":
            sig = memo.base_signature(node.relation)
            return memo.intern_eq(dag, sig, node.est_size), sig
        results = [walk(c) for c in node.children]
        if node.kind == KIND_JOIN:
            sig = memo.join_signature(results[0][1], results[1][1], node.detail)
        else:
            sig = memo.extend_signature(results[0][1], node.kind, node.detail)
        eq = memo.intern_eq(dag, sig, node.est_size)
        memo.attach_op(dag, eq, node.kind, node.detail,
                       tuple(r[0] for r in results), node.op_cost, node.factor)
        return eq, sig

    return walk(plan)[0]


def _base_relation_of(dag: Dag, eq_id: int) -> str:
    sig = dag.eq_nodes[eq_id].signature
    return sig[0][0]


def best_plan(dag: Dag, root_eq: int) -> Plan:
    """Minimum-cost expansion below an eq-node; cost ties break on canonical op text."""
    cache: dict[int, Plan] = {}

    def best(eq_id: int) -> Plan:
        if eq_id in cache:
            return cache[eq_id]
        node = dag.eq_nodes[eq_id]
        if node.is_base:
            plan = base_plan(_base_relation_of(dag, eq_id), node.est_size)
        else:
            candidates = []
            for op_id in sorted(node.child_ops,
                                key=lambda i: dag.op_nodes[i].sort_key()):
                op = dag.op_nodes[op_id]
                children = tuple(best(c) for c in op.children)
                cost = op.op_cost + sum(c.cum_cost for c in children)
                candidates.append((cost, op.sort_key(), op, children))
            cost, _, op, children = min(candidates, key=lambda c: (c[0], c[1]))
            plan = Plan(kind=op.kind, detail=op.detail, relation=None,
                        children=children, factor=op.factor,
                        est_size=node.est_size, op_cost=op.op_cost, cum_cost=cost)
        cache[eq_id] = plan
        return plan

    if root_eq not in dag.eq_nodes:
        raise DagError(f"unknown eq-node {root_eq}")
    return best(root_eq)


def enumerate_plans(dag: Dag, root_eq: int, limit: int | None = None) -> list[Plan]:
    """All expansions below an eq-node in canonical order.

    Plans share immutable subtrees, so the list stays cheap even when
    alternatives overlap.  A limit guards against factorial explosions.
    """
    if limit is not None:
        n = memo.plan_count_for(dag, root_eq)
        if n > limit:
            raise LimitExceededError("plan enumeration", n, limit)
    cache: dict[int, list[Plan]] = {}

    def expand(eq_id: int) -> list[Plan]:
        if eq_id in cache:
            return cache[eq_id]
        node = dag.eq_nodes[eq_id]
        if node.is_base:
            out = [base_plan(_base_relation_of(dag, eq_id), node.est_size)]
        else:
            out = []
            for op_id in sorted(node.child_ops,
                                key=lambda i: dag.op_nodes[i].sort_key()):
                op = dag.op_nodes[op_id]
                for combo in itertools.product(*(expand(c) for c in op.children)):
                    cost = op.op_cost + sum(c.cum_cost for c in combo)
                    out.append(Plan(kind=op.kind, detail=op.detail, relation=None,
                                    children=tuple(combo), factor=op.factor,
                                    est_size=node.est_size, op_cost=op.op_cost,
                                    cum_cost=cost))
        cache[eq_id] = out
        return out

    return expand(root_eq)
