"""Placement of non-join operators over join-order plans.

Each stage consumes a dag, decorates every maximal plan under every
registered query root, and interns the surviving decorated plans into a
fresh memo:

  selects   exhaustive joint placement over each plan's candidate positions,
            global per-plan minimum (the val1/val2 comparison of the local
            rule is subsumed by evaluating full plan costs)
  group-by  local walk from the root downward by the val1/val2 rule,
            having attached directly above wherever the group-by lands
  order-by  same walk shape with the sort-specific val2; ordering is
            size-neutral so the default outcome is root placement
  projects  one projection above each query root (single query), or
            per-eq-node projections of the attributes every consumer
            needs (multi-query mode)

Costly plans are pruned branch-and-bound style: a plan is dropped as soon
as a cost lower bound exceeds the best complete plan seen so far.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import re
from dataclasses import dataclass

from . import costplan, joindag, memo, sqlfront
from .catalog import Attribute, Catalog, Relation
from .costplan import Plan, base_plan, op_plan
from .errors import DagError, ValidationError
from .joindag import HistoryDag
from .memo import (Dag, KIND_GROUPBY, KIND_HAVING, KIND_JOIN, KIND_JOINFILTER,
                   KIND_ORDERBY, KIND_PROJECT, KIND_SELECT)
from .sqlfront import AttrRef, HavingCondition, Query, SelectCondition, extract_join_set

# Joint placement is exhaustive up to this many position combinations per
# plan; beyond it selects are placed one at a time (most selective first).
JOINT_PLACEMENT_CAP = 20000

SELECT_AFTER_JOIN = "select_after_join"
SELECT_BEFORE_JOIN = "select_before_join"


def choose_order(join_inputs: tuple[float, float, float], select_ssf: float) -> str:
    """Local two-operator rule: join-then-select vs select-then-join.

    cost1 = |A|*|B| + jsf*|A|*|B| (join work plus consuming its result),
    cost2 = |A| + ssf*|A|*|B| (filter A, then join the filtered input).
    Ties keep the select before the join.
    """
    a, b, jsf = join_inputs
    cost1 = a * b + jsf * a * b
    cost2 = a + select_ssf * a * b
    return SELECT_AFTER_JOIN if cost1 < cost2 else SELECT_BEFORE_JOIN


# -- plan walking helpers ----------------------------------------------------

def plan_bases(plan: Plan) -> frozenset[str]:
    if plan.kind == "base":
        return frozenset((plan.relation,))
    out: frozenset[str] = frozenset()
    for child in plan.children:
        out = out | plan_bases(child)
    return out


def path_to_relation(plan: Plan, relation: str) -> list[Plan]:
    """Nodes from the plan root down to `relation`'s base leaf."""
    node = plan
    path = [node]
    while node.kind != "base":
        for child in node.children:
            if relation in plan_bases(child):
                node = child
                path.append(node)
                break
        else:
            raise DagError(f"relation {relation!r} not reachable in plan")
    if node.relation != relation:
        raise DagError(f"relation {relation!r} not a base of this plan")
    return path


def _rebuild_with_selects(plan: Plan, placed: dict[int, list[SelectCondition]]) -> Plan:
    """Copy of `plan` with selects stacked above the nodes they map to.

    Stacks apply most selective first (ascending ssf, then canonical text).
    """

    def walk(node: Plan) -> Plan:
        if node.kind == "base":
            out = node
        else:
            out = op_plan(node.kind, node.detail,
                          tuple(walk(c) for c in node.children), node.factor)
        for cond in sorted(placed.get(id(node), ()),
                           key=lambda s: (s.ssf, s.canonical())):
            out = op_plan(KIND_SELECT, cond.canonical(), (out,), cond.ssf)
        return out

    return walk(plan)


def _select_cost_lower_bound(plan: Plan, selects) -> float:
    """Plan cost with every select pushed to its leaf, minus the select
    operators' own costs: no placement can cost less."""
    placed: dict[int, list[SelectCondition]] = {}
    for cond in selects:
        leaf = path_to_relation(plan, cond.relation)[-1]
        placed.setdefault(id(leaf), []).append(cond)
    decorated = _rebuild_with_selects(plan, placed)
    select_cost = 0.0
    stack = [decorated]
    while stack:
        node = stack.pop()
        if node.kind == KIND_SELECT:
            select_cost += node.op_cost
        stack.extend(node.children)
    return decorated.cum_cost - select_cost


def place_selects_on_plan(plan: Plan, selects) -> Plan:
    """Minimum-cost joint placement of all selects onto one plan.

    Candidate positions for each select are every node on the path from its
    relation's leaf to the root; cost ties prefer positions nearer the root.
    Beyond JOINT_PLACEMENT_CAP combinations the selects are placed one at a
    time in ascending-ssf order, each at its own exhaustive optimum.
    """
    if not selects:
        return plan
    ordered = sorted(selects, key=lambda s: (s.canonical(),))
    paths = {s.canonical(): path_to_relation(plan, s.relation) for s in ordered}
    combos = math.prod(len(paths[s.canonical()]) for s in ordered)
    if combos > JOINT_PLACEMENT_CAP:
        current = plan
        for cond in sorted(ordered, key=lambda s: (s.ssf, s.canonical())):
            current = place_selects_on_plan(current, [cond])
        return current

    best: Plan | None = None
    for assignment in itertools.product(*(paths[s.canonical()] for s in ordered)):
        placed: dict[int, list[SelectCondition]] = {}
        for cond, node in zip(ordered, assignment):
            placed.setdefault(id(node), []).append(cond)
        candidate = _rebuild_with_selects(plan, placed)
        if best is None or candidate.cum_cost < best.cum_cost:
            best = candidate
    return best


# -- stage helpers -----------------------------------------------------------

def _roots_in_order(dag: Dag) -> list[tuple[str, int]]:
    return sorted(dag.query_roots.items())


def _decorate_stage(dag: Dag, decorate, *, split_classes: bool = False) -> Dag:
    """Run one sprinkling stage over every registered root.

    `decorate(plan) -> Plan` maps one maximal plan to its decorated form.
    Plans whose cost exceeds the running best are pruned.  When
    `split_classes` is set, decorated plans may disagree on the root
    signature (the stage changed what the result denotes, e.g. grouping
    below different subtrees); only the signature class of the cheapest
    plan is kept.
    """
    fresh = Dag()
    fresh.meta = dict(dag.meta)
    for query_id, root in _roots_in_order(dag):
        kept: list[tuple[float, Plan]] = []
        running_best = math.inf
        for plan in costplan.enumerate_plans(dag, root):
            decorated = decorate(plan)
            if decorated.cum_cost > running_best:
                continue
            running_best = decorated.cum_cost
            kept.append((decorated.cum_cost, decorated))
        if not kept:
            raise DagError(f"no plans under root {query_id!r}")
        if split_classes:
            best_cost = min(c for c, _ in kept)
            winner = min(memo.signature_text(costplan.plan_signature(p))
                         for c, p in kept if c == best_cost)
            kept = [(c, p) for c, p in kept
                    if memo.signature_text(costplan.plan_signature(p)) == winner]
        new_root = None
        for _, decorated in kept:
            new_root = costplan.intern_plan(fresh, decorated)
        memo.register_root(fresh, query_id, new_root)
    return fresh


def sprinkle_selects(jd: Dag, selects, catalog: Catalog) -> Dag:
    """Insert select conditions into every join-order plan of a join dag."""
    selects = tuple(selects)
    for cond in selects:
        catalog.relation(cond.relation)
    for query_id, root in _roots_in_order(jd):
        bases = set(jd.eq_nodes[root].signature[0])
        for cond in selects:
            if cond.relation not in bases:
                raise ValidationError(
                    f"select on {cond.relation!r} but query {query_id!r} "
                    f"covers {sorted(bases)}")

    def decorate(plan: Plan) -> Plan:
        return place_selects_on_plan(plan, selects)

    if not selects:
        return _decorate_stage(jd, lambda p: p)

    # Lower-bound pruning wrapper: skip joint placement for plans that
    # cannot beat the best complete plan found so far.
    fresh = Dag()
    fresh.meta = dict(jd.meta)
    for query_id, root in _roots_in_order(jd):
        running_best = math.inf
        kept: list[Plan] = []
        for plan in costplan.enumerate_plans(jd, root):
            if _select_cost_lower_bound(plan, selects) > running_best:
                continue
            decorated = decorate(plan)
            if decorated.cum_cost > running_best:
                continue
            running_best = decorated.cum_cost
            kept.append(decorated)
        if not kept:
            raise DagError(f"no plans under root {query_id!r}")
        new_root = None
        for decorated in kept:
            new_root = costplan.intern_plan(fresh, decorated)
        memo.register_root(fresh, query_id, new_root)
    return fresh


def _groupby_detail(group_by, child: Plan) -> str:
    keys = ", ".join(f"{r}.{a}" for r, a in group_by)
    scope = memo.signature_text(costplan.plan_signature(child))
    return f"groupby({keys})@{scope}"


def groupby_distinct(group_by, catalog: Catalog) -> float:
    product = 1.0
    for rel, attr in group_by:
        product *= catalog.relation(rel).attribute(attr).distinct_count
    return product


def place_groupby_on_plan(plan: Plan, group_by, having: HavingCondition | None,
                          d: float) -> Plan:
    """Walk the group-by down from the root while grouping-early wins.

    At a join t ⋈ b whose t-side covers every grouping attribute:
    val1 = |t|*|b| + |e1| (join first, group the output) against
    val2 = |t| + min(d,|t|)*|b| (group t, then join).  Strictly smaller
    val2 descends; ties stay up.  The walk only crosses joins.
    """
    group_rels = {r for r, _ in group_by}
    spine: list[Plan] = []  # joins crossed, root-first; ends at the wrap target
    node = plan
    while node.kind == KIND_JOIN:
        t, b = None, None
        for i, child in enumerate(node.children):
            if group_rels <= plan_bases(child):
                t, b = child, node.children[1 - i]
        if t is None:
            break
        val1 = t.est_size * b.est_size + node.est_size
        val2 = t.est_size + min(d, t.est_size) * b.est_size
        if not val2 < val1:
            break
        spine.append(node)
        node = t

    def wrap(target: Plan) -> Plan:
        out = op_plan(KIND_GROUPBY, _groupby_detail(group_by, target), (target,), d)
        if having is not None:
            out = op_plan(KIND_HAVING, having.canonical(), (out,), having.ssf)
        return out

    return _rebuild_along_spine(spine, node, wrap)


def _rebuild_along_spine(spine: list[Plan], target: Plan, wrap) -> Plan:
    """Re-derive the joins in `spine` (root-first) with `target`, the node the
    innermost spine join consumes, replaced by wrap(target)."""
    if not spine:
        return wrap(target)

    def rebuild(depth: int) -> Plan:
        join = spine[depth]
        on_path = spine[depth + 1] if depth + 1 < len(spine) else target
        children = []
        for child in join.children:
            if child is on_path:
                children.append(rebuild(depth + 1) if depth + 1 < len(spine)
                                else wrap(target))
            else:
                children.append(child)
        return op_plan(join.kind, join.detail, tuple(children), join.factor)

    return rebuild(0)


def sprinkle_groupby(dag: Dag, group_attrs, having: HavingCondition | None,
                     catalog: Catalog) -> Dag:
    """Place the grouping (and its having filter) on every plan."""
    group_by = tuple(sorted(group_attrs))
    if not group_by:
        if having is not None:
            raise ValidationError("having without group-by")
        return dag
    d = groupby_distinct(group_by, catalog)
    return _decorate_stage(
        dag, lambda p: place_groupby_on_plan(p, group_by, having, d),
        split_classes=True)


def place_orderby_on_plan(plan: Plan, detail: str, order_rels: set[str],
                          block_kinds: tuple[str, ...]) -> Plan:
    """Walk the ordering down while sorting-early wins.

    val1 = |t|*|b| + |e1| (join, then sort the output) against
    val2 = |t| + |t|*|b| (sort t, then join): descending pays only when the
    join output outgrows its sorted input.  Ties stay up, so the default is
    a root-level sort.  Never descends past grouping/having nodes.
    """
    spine: list[Plan] = []
    node = plan
    while node.kind == KIND_JOIN:
        t, b = None, None
        for i, child in enumerate(node.children):
            if order_rels <= plan_bases(child) and child.kind not in block_kinds:
                t, b = child, node.children[1 - i]
        if t is None:
            break
        val1 = t.est_size * b.est_size + node.est_size
        val2 = t.est_size + t.est_size * b.est_size
        if not val2 < val1:
            break
        spine.append(node)
        node = t

    return _rebuild_along_spine(
        spine, node, lambda target: op_plan(KIND_ORDERBY, detail, (target,), None))


def sprinkle_orderby(dag: Dag, order_attrs) -> Dag:
    """Place the ordering on every plan; root placement unless joins grow."""
    order_by = tuple(order_attrs)
    if not order_by:
        return dag
    detail = "orderby(" + ", ".join(item.render() for item in order_by) + ")"
    order_rels = {item.relation for item in order_by}
    return _decorate_stage(
        dag, lambda p: place_orderby_on_plan(p, detail, order_rels,
                                             (KIND_GROUPBY, KIND_HAVING)))


# -- projections -------------------------------------------------------------

_REF_TOKEN = re.compile(r"[a-z_][a-z0-9_]*\.[a-z_][a-z0-9_]*")


def _op_refs(kind: str, detail: str) -> set[str]:
    """Qualified attributes an operator's predicate text mentions."""
    if kind == KIND_GROUPBY:
        detail = detail.split("@", 1)[0]
    return set(_REF_TOKEN.findall(detail))


def _available_attrs(dag: Dag, eq_id: int, catalog: Catalog) -> set[str]:
    sig = dag.eq_nodes[eq_id].signature
    if sig[3]:
        return set(sig[3])
    out: set[str] = set()
    for rel in sig[0]:
        out.update(f"{rel}.{a.name}" for a in catalog.relation(rel).attributes)
    return out


def _needed_attrs(dag: Dag, roots: dict[str, int], outputs: dict[str, set[str]],
                  catalog: Catalog) -> dict[int, set[str]]:
    """Backward pass: attributes each eq-node must keep for its consumers."""
    needed: dict[int, set[str]] = {eq: set() for eq in dag.eq_nodes}
    for query_id, root in roots.items():
        needed[root] |= outputs[query_id]
    order = sorted(dag.eq_nodes, reverse=True)  # ids are topological
    for eq_id in order:
        node = dag.eq_nodes[eq_id]
        for op_id in node.child_ops:
            op = dag.op_nodes[op_id]
            downward = needed[eq_id] | _op_refs(op.kind, op.detail)
            for child in op.children:
                avail = _available_attrs(dag, child, catalog)
                needed[child] |= downward & avail
    return needed


def sprinkle_projects(dag: Dag, queries: list[tuple[str, Query]],
                      catalog: Catalog) -> Dag:
    """Attach projections: one root projection per query, and in multi-query
    mode an additional projection above every eq-node that carries more
    attributes than its consumers need (materialization candidates)."""
    out = dag.clone()
    outputs = {qid: sqlfront.output_attrs(q, catalog) for qid, q in queries}
    for query_id, query in queries:
        root = out.query_roots[query_id]
        retained = outputs[query_id]
        available = _available_attrs(out, root, catalog)
        unresolved = retained - available
        if unresolved:
            raise ValidationError(
                f"output attributes not derivable at the root: {sorted(unresolved)}")
        if not retained or retained == available:
            continue
        node = out.eq_nodes[root]
        detail = sqlfront.project_text(retained)
        sig = memo.extend_signature(node.signature, KIND_PROJECT, detail)
        new_root = memo.intern_eq(out, sig, node.est_size)
        memo.attach_op(out, new_root, KIND_PROJECT, detail, (root,),
                       op_cost=node.est_size, factor=None)
        memo.register_root(out, query_id, new_root)

    if len(queries) > 1:
        roots = {qid: out.query_roots[qid] for qid, _ in queries}
        needed = _needed_attrs(out, roots, outputs, catalog)
        for eq_id in sorted(needed):
            node = out.eq_nodes[eq_id]
            if node.is_base or node.signature[3]:
                continue
            avail = _available_attrs(out, eq_id, catalog)
            keep = needed[eq_id]
            if not keep or keep == avail:
                continue
            detail = sqlfront.project_text(keep)
            sig = memo.extend_signature(node.signature, KIND_PROJECT, detail)
            proj = memo.intern_eq(out, sig, node.est_size)
            memo.attach_op(out, proj, KIND_PROJECT, detail, (eq_id,),
                           op_cost=node.est_size, factor=None)
    return out


# -- orchestration -----------------------------------------------------------

@dataclass
class OptimizeResult:
    """Everything one optimization run produced."""

    query_id: str
    plan: Plan
    dag: Dag
    history: HistoryDag | None
    combinations_considered: int
    jd_eq_nodes: int
    jd_plans: int
    inner: "OptimizeResult | None" = None


def extract_query_joindag(history: HistoryDag, query: Query, catalog: Catalog,
                          query_id: str) -> Dag:
    """Standalone join dag for one query: the history subgraph reachable from
    the query's full-join node, re-interned with the query root registered."""
    out = Dag()
    if not query.joins:
        (rel,) = query.tables
        root = memo.ensure_base(out, rel, float(catalog.relation(rel).cardinality))
        memo.register_root(out, query_id, root)
        return out
    bases = {t: float(catalog.relation(t).cardinality) for t in sorted(query.tables)}
    join_texts = tuple(sorted(j.canonical() for j in extract_join_set(query)))
    src_root = joindag.query_join_root(history, bases, join_texts)
    mapping: dict[int, int] = {}

    def clone(eq_id: int) -> int:
        if eq_id in mapping:
            return mapping[eq_id]
        node = history.dag.eq_nodes[eq_id]
        new_eq = memo.intern_eq(out, node.signature, node.est_size)
        mapping[eq_id] = new_eq
        for op_id in sorted(node.child_ops):
            op = history.dag.op_nodes[op_id]
            children = tuple(clone(c) for c in op.children)
            memo.attach_op(out, new_eq, op.kind, op.detail, children,
                           op_cost=op.op_cost, factor=op.factor)
        return new_eq

    memo.register_root(out, query_id, clone(src_root))
    return out


def optimize_single(query: Query, catalog: Catalog, *,
                    history: HistoryDag | None = None, limit: int = 8,
                    query_id: str = "q1") -> OptimizeResult:
    """Full pipeline for one query: reuse (or grow) the join-order history,
    then sprinkle selects, grouping, ordering, and projections."""
    if query.subquery is not None:
        return _optimize_nested(query, catalog, history=history, limit=limit,
                                query_id=query_id)
    joins = extract_join_set(query)
    base_history = history if history is not None else joindag.empty_history(catalog)
    grown = joindag.build_incremental(base_history, joins, catalog, limit)
    jd = extract_query_joindag(grown, query, catalog, query_id)
    jd_eq, _, jd_plans = memo.count_nodes(jd)

    dag = sprinkle_selects(jd, query.selects, catalog)
    if query.group_by:
        dag = sprinkle_groupby(dag, query.group_by, query.having, catalog)
    if query.order_by:
        dag = sprinkle_orderby(dag, query.order_by)
    dag = sprinkle_projects(dag, [(query_id, query)], catalog)
    plan = costplan.best_plan(dag, dag.query_roots[query_id])
    return OptimizeResult(query_id=query_id, plan=plan, dag=dag, history=grown,
                          combinations_considered=math.factorial(len(joins)),
                          jd_eq_nodes=jd_eq, jd_plans=jd_plans)


def _synthetic_catalog(catalog: Catalog, alias: str, column_sources,
                       cardinality: float) -> Catalog:
    attrs = []
    for col in sorted(column_sources):
        src_rel, src_attr = column_sources[col]
        d = catalog.relation(src_rel).attribute(src_attr).distinct_count
        attrs.append(Attribute(name=col, distinct_count=d, is_key=False))
    rel = Relation(name=alias, cardinality=cardinality, attributes=tuple(attrs))
    return Catalog(relations={**catalog.relations, alias: rel},
                   graph=catalog.graph, stats=catalog.stats,
                   fingerprint=catalog.fingerprint)


def _splice_plan(plan: Plan, alias: str, inner: Plan) -> Plan:
    if plan.kind == "base":
        return inner if plan.relation == alias else plan
    return op_plan(plan.kind, plan.detail,
                   tuple(_splice_plan(c, alias, inner) for c in plan.children),
                   plan.factor)


def _optimize_nested(query: Query, catalog: Catalog, *,
                     history: HistoryDag | None, limit: int,
                     query_id: str) -> OptimizeResult:
    """Two-level query: optimize the inner block first, expose its result as
    a synthetic relation, optimize the outer block, then splice the plans."""
    sub = query.subquery
    inner_res = optimize_single(sub.query, catalog, history=history, limit=limit,
                                query_id=f"{query_id}.inner")
    synthetic = _synthetic_catalog(catalog, sub.alias, sub.column_sources,
                                   inner_res.plan.est_size)
    if sub.form == "in":
        link = sqlfront.JoinCondition.make(sub.outer_attr,
                                           (sub.alias, sub.inner_column),
                                           sub.link_jsf)
        joins = {j.canonical(): j for j in query.joins}
        joins[link.canonical()] = link
        outer_query = dataclasses.replace(
            query, tables=query.tables | {sub.alias},
            joins=tuple(joins[t] for t in sorted(joins)), subquery=None)
    else:
        outer_query = dataclasses.replace(query, subquery=None)
    outer_res = optimize_single(outer_query, synthetic, history=None, limit=limit,
                                query_id=query_id)
    plan = _splice_plan(outer_res.plan, sub.alias, inner_res.plan)
    return OptimizeResult(
        query_id=query_id, plan=plan, dag=outer_res.dag, history=history,
        combinations_considered=(outer_res.combinations_considered
                                 + inner_res.combinations_considered),
        jd_eq_nodes=outer_res.jd_eq_nodes, jd_plans=outer_res.jd_plans,
        inner=inner_res)


def optimize_nested(query: Query, history: HistoryDag | None,
                    catalog: Catalog) -> Plan:
    """Best plan for a two-level nested query (inner block spliced as a leaf)."""
    if query.subquery is None:
        raise ValidationError("query has no subquery")
    return _optimize_nested(query, catalog, history=history, limit=8,
                            query_id="q1").plan


def optimize_many(queries: list[tuple[str, Query]], catalog: Catalog, *,
                  history: HistoryDag | None = None,
                  limit: int = 8) -> tuple[Dag, dict[str, Plan], HistoryDag]:
    """Optimize several queries into one shared dag (common subplans merge),
    with projections widened to the union of the queries' needs."""
    grown = history if history is not None else joindag.empty_history(catalog)
    ordered = sorted(queries, key=lambda pair: pair[0])
    results: dict[str, OptimizeResult] = {}
    for query_id, query in ordered:
        if query.subquery is not None:
            raise ValidationError("nested queries are not supported in "
                                  "multi-query mode")
        results[query_id] = optimize_single(query, catalog, history=grown,
                                            limit=limit, query_id=query_id)
        grown = results[query_id].history
    shared = Dag()
    for query_id, _ in ordered:
        res = results[query_id]
        root = None
        for plan in costplan.enumerate_plans(res.dag, res.dag.query_roots[query_id]):
            root = costplan.intern_plan(shared, plan)
        memo.register_root(shared, query_id, root)
    shared = sprinkle_projects(shared, ordered, catalog)
    plans = {qid: costplan.best_plan(shared, shared.query_roots[qid])
             for qid, _ in queries}
    return shared, plans, grown
