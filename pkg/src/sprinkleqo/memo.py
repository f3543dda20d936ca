"""AND/OR DAG memo table.

Eq-nodes are equivalence classes of partial results; their child op-nodes are
alternative ways to produce the class (OR), and each op-node's children are
the eq-node inputs it consumes (AND).  An eq-node is identified by its
canonical signature:

    (sorted base relations,
     sorted applied join-condition texts,
     sorted applied select/group-by/having/order-by texts,
     sorted retained projection attributes)

Interning by signature is what merges plans produced in different orders into
one shared structure.  All tie-breaking is lexicographic on canonical text so
builds are byte-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DagError

Signature = tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...], tuple[str, ...]]

KIND_JOIN = "join"
KIND_JOINFILTER = "joinfilter"
KIND_SELECT = "select"
KIND_PROJECT = "project"
KIND_GROUPBY = "groupby"
KIND_HAVING = "having"
KIND_ORDERBY = "orderby"
UNARY_KINDS = (KIND_JOINFILTER, KIND_SELECT, KIND_PROJECT, KIND_GROUPBY,
               KIND_HAVING, KIND_ORDERBY)
OP_KINDS = (KIND_JOIN,) + UNARY_KINDS

SIZE_RTOL = 1e-9


def make_signature(bases, joins=(), unary=(), projection=()) -> Signature:
    return (tuple(sorted(bases)), tuple(sorted(joins)), tuple(sorted(unary)),
            tuple(sorted(projection)))


def base_signature(relation: str) -> Signature:
    return ((relation,), (), (), ())


def extend_signature(sig: Signature, kind: str, detail: str) -> Signature:
    """Signature of a unary operator applied on top of `sig`.

    Joinfilters extend the applied-join set (they realize a join condition
    over an already-connected tree); projects replace the retained-attribute
    component; every other unary op extends the applied-unary set.
    """
    bases, joins, unary, projection = sig
    if kind == KIND_JOINFILTER:
        return make_signature(bases, set(joins) | {detail}, unary, projection)
    if kind == KIND_PROJECT:
        attrs = detail[len("project("):-1]
        retained = tuple(a.strip() for a in attrs.split(",") if a.strip())
        return make_signature(bases, joins, unary, retained)
    return make_signature(bases, joins, set(unary) | {detail}, projection)


def join_signature(a: Signature, b: Signature, detail: str) -> Signature:
    """Signature of joining two disjoint trees under one join condition."""
    return make_signature(set(a[0]) | set(b[0]),
                          set(a[1]) | set(b[1]) | {detail},
                          set(a[2]) | set(b[2]), ())


def signature_text(sig: Signature) -> str:
    bases, joins, unary, projection = sig
    parts = ["{" + ",".join(bases) + "}"]
    if joins:
        parts.append("j[" + "; ".join(joins) + "]")
    if unary:
        parts.append("u[" + "; ".join(unary) + "]")
    if projection:
        parts.append("p[" + ",".join(projection) + "]")
    return " ".join(parts)


@dataclass
class EqNode:
    id: int
    signature: Signature
    est_size: float
    child_ops: list[int] = field(default_factory=list)

    @property
    def is_base(self) -> bool:
        return not self.child_ops


@dataclass(frozen=True)
class OpNode:
    id: int
    kind: str
    detail: str
    children: tuple[int, ...]
    op_cost: float
    factor: float | None = None

    def sort_key(self) -> tuple:
        return (self.kind, self.detail, self.children)


class Dag:
    """Mutable memo table; eq/op ids are assigned in intern order."""

    def __init__(self):
        self.eq_nodes: dict[int, EqNode] = {}
        self.op_nodes: dict[int, OpNode] = {}
        self.query_roots: dict[str, int] = {}
        self._sig_index: dict[Signature, int] = {}
        self._op_index: dict[tuple, int] = {}
        self._next_eq = 0
        self._next_op = 0
        self.meta: dict = {}

    # -- construction ---------------------------------------------------

    def find_eq(self, signature: Signature) -> int | None:
        return self._sig_index.get(signature)

    def clone(self) -> "Dag":
        out = Dag()
        out.eq_nodes = {i: EqNode(n.id, n.signature, n.est_size, list(n.child_ops))
                        for i, n in self.eq_nodes.items()}
        out.op_nodes = dict(self.op_nodes)
        out.query_roots = dict(self.query_roots)
        out._sig_index = dict(self._sig_index)
        out._op_index = dict(self._op_index)
        out._next_eq = self._next_eq
        out._next_op = self._next_op
        out.meta = dict(self.meta)
        return out


def intern_eq(dag: Dag, signature: Signature, est_size: float) -> int:
    """Return the eq-node for this signature, creating it if new.

    A signature collision with an inconsistent size estimate is an error:
    every alternative of one equivalence class must yield the same size.
    """
    existing = dag.find_eq(signature)
    if existing is not None:
        node = dag.eq_nodes[existing]
        tol = SIZE_RTOL * max(1.0, abs(node.est_size), abs(est_size))
        if abs(node.est_size - est_size) > tol:
            raise DagError(
                f"signature collision with inconsistent est_size: "
                f"{signature_text(signature)} has {node.est_size!r} vs {est_size!r}")
        return existing
    node = EqNode(id=dag._next_eq, signature=signature, est_size=float(est_size))
    dag.eq_nodes[node.id] = node
    dag._sig_index[signature] = node.id
    dag._next_eq += 1
    return node.id


def _reaches(dag: Dag, start_eq: int, target_eq: int) -> bool:
    stack = [start_eq]
    seen: set[int] = set()
    while stack:
        eq = stack.pop()
        if eq == target_eq:
            return True
        if eq in seen:
            continue
        seen.add(eq)
        for op_id in dag.eq_nodes[eq].child_ops:
            stack.extend(dag.op_nodes[op_id].children)
    return False


def attach_op(dag: Dag, parent_eq: int, kind: str, detail: str,
              children: tuple[int, ...], op_cost: float,
              factor: float | None = None) -> int:
    """Attach an operator alternative under an eq-node, deduplicated.

    Join ops take exactly two children (stored in canonical order); every
    other kind takes one.  Attaching is idempotent: the same (kind, detail,
    children) maps to one op-node and one parent arc.
    """
    if kind not in OP_KINDS:
        raise DagError(f"unknown op kind {kind!r}")
    if parent_eq not in dag.eq_nodes:
        raise DagError(f"unknown parent eq-node {parent_eq}")
    for child in children:
        if child not in dag.eq_nodes:
            raise DagError(f"dangling child eq-node {child}")
    if kind == KIND_JOIN:
        if len(children) != 2:
            raise DagError("join ops take exactly two children")
        children = tuple(sorted(
            children, key=lambda c: signature_text(dag.eq_nodes[c].signature)))
    elif len(children) != 1:
        raise DagError(f"{kind} ops take exactly one child")
    key = (kind, detail, children)
    existing = dag._op_index.get(key)
    if existing is not None:
        if existing not in dag.eq_nodes[parent_eq].child_ops:
            raise DagError(f"op {key!r} already attached under a different eq-node")
        return existing
    for child in children:
        if child == parent_eq or _reaches(dag, child, parent_eq):
            raise DagError(
                f"attaching {kind} {detail!r} would create a cycle via eq-node {child}")
    op = OpNode(id=dag._next_op, kind=kind, detail=detail, children=children,
                op_cost=float(op_cost), factor=factor)
    dag.op_nodes[op.id] = op
    dag._op_index[key] = op.id
    dag._next_op += 1
    dag.eq_nodes[parent_eq].child_ops.append(op.id)
    return op.id


def register_root(dag: Dag, query_id: str, eq_id: int) -> None:
    if eq_id not in dag.eq_nodes:
        raise DagError(f"cannot register unknown eq-node {eq_id} as a root")
    dag.query_roots[query_id] = eq_id


def ensure_base(dag: Dag, relation: str, cardinality: float) -> int:
    return intern_eq(dag, base_signature(relation), cardinality)


# -- counting -------------------------------------------------------------

def plan_count_for(dag: Dag, eq_id: int, _memo: dict[int, int] | None = None) -> int:
    """Number of distinct full expansions below an eq-node (product-sum rule)."""
    memo = _memo if _memo is not None else {}
    if eq_id in memo:
        return memo[eq_id]
    node = dag.eq_nodes[eq_id]
    if node.is_base:
        memo[eq_id] = 1
        return 1
    total = 0
    for op_id in node.child_ops:
        prod = 1
        for child in dag.op_nodes[op_id].children:
            prod *= plan_count_for(dag, child, memo)
        total += prod
    memo[eq_id] = total
    return total


def dag_roots(dag: Dag) -> list[int]:
    """Registered query roots, else every parentless eq-node."""
    if dag.query_roots:
        return sorted(set(dag.query_roots.values()))
    has_parent: set[int] = set()
    for op in dag.op_nodes.values():
        has_parent.update(op.children)
    return sorted(eq for eq in dag.eq_nodes if eq not in has_parent)


def count_nodes(dag: Dag, internal_only: bool = False) -> tuple[int, int, int]:
    """(eq_count, op_count, plan_count over the dag's roots)."""
    if internal_only:
        eq_count = sum(1 for n in dag.eq_nodes.values() if not n.is_base)
    else:
        eq_count = len(dag.eq_nodes)
    memo: dict[int, int] = {}
    plans = sum(plan_count_for(dag, root, memo) for root in dag_roots(dag))
    return eq_count, len(dag.op_nodes), plans


def arc_signature_set(dag: Dag) -> frozenset:
    """Id-free structural fingerprint: one entry per op-node.

    Two dags with equal eq-signature sets and equal arc sets are the same
    graph up to node numbering.
    """
    arcs = set()
    for eq_id, node in dag.eq_nodes.items():
        for op_id in node.child_ops:
            op = dag.op_nodes[op_id]
            child_sigs = tuple(dag.eq_nodes[c].signature for c in op.children)
            arcs.add((node.signature, op.kind, op.detail, child_sigs))
    return frozenset(arcs)


# -- rendering ------------------------------------------------------------

def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(dag: Dag, name: str = "andor_dag") -> str:
    """Deterministic DOT text: eq-nodes as ellipses, op-nodes as boxes."""
    lines = [f"digraph {name} {{", "  rankdir=BT;"]
    for eq_id in sorted(dag.eq_nodes):
        node = dag.eq_nodes[eq_id]
        label = _dot_escape(signature_text(node.signature)) + f"\\nsize={node.est_size:.6g}"
        lines.append(f'  eq{eq_id} [shape=ellipse, label="{label}"];')
    for op_id in sorted(dag.op_nodes):
        op = dag.op_nodes[op_id]
        label = _dot_escape(f"{op.kind} {op.detail}") + f"\\ncost={op.op_cost:.6g}"
        lines.append(f'  op{op_id} [shape=box, label="{label}"];')
    eq_to_op = sorted((eq_id, op_id)
                      for eq_id, node in dag.eq_nodes.items()
                      for op_id in node.child_ops)
    for eq_id, op_id in eq_to_op:
        lines.append(f"  eq{eq_id} -> op{op_id};")
    op_to_eq = sorted((op.id, child) for op in dag.op_nodes.values() for child in op.children)
    for op_id, eq_id in op_to_eq:
        lines.append(f"  op{op_id} -> eq{eq_id};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- serialization ----------------------------------------------------------

def dag_to_doc(dag: Dag) -> dict:
    return {
        "format": 1,
        "eq_nodes": [
            {"id": n.id, "signature": [list(part) for part in n.signature],
             "est_size": n.est_size}
            for n in sorted(dag.eq_nodes.values(), key=lambda n: n.id)
        ],
        "op_nodes": [
            {"id": o.id, "kind": o.kind, "detail": o.detail,
             "children": list(o.children), "op_cost": o.op_cost, "factor": o.factor}
            for o in sorted(dag.op_nodes.values(), key=lambda o: o.id)
        ],
        "arcs": {
            "eq_to_op": sorted([eq_id, op_id]
                               for eq_id, n in dag.eq_nodes.items()
                               for op_id in n.child_ops),
            "op_to_eq": sorted([o.id, child]
                               for o in dag.op_nodes.values() for child in o.children),
        },
        "roots": dict(sorted(dag.query_roots.items())),
    }


def dag_from_doc(doc: dict) -> Dag:
    if not isinstance(doc, dict) or doc.get("format") != 1:
        raise DagError(f"unsupported dag format {doc.get('format')!r}")
    dag = Dag()
    for nd in doc.get("eq_nodes", []):
        sig = tuple(tuple(part) for part in nd["signature"])
        if len(sig) != 4:
            raise DagError(f"malformed signature in eq-node {nd.get('id')}")
        node = EqNode(id=int(nd["id"]), signature=sig, est_size=float(nd["est_size"]))
        if node.id in dag.eq_nodes or sig in dag._sig_index:
            raise DagError(f"duplicate eq-node {node.id}")
        dag.eq_nodes[node.id] = node
        dag._sig_index[sig] = node.id
    for od in doc.get("op_nodes", []):
        op = OpNode(id=int(od["id"]), kind=od["kind"], detail=od["detail"],
                    children=tuple(int(c) for c in od["children"]),
                    op_cost=float(od["op_cost"]),
                    factor=None if od.get("factor") is None else float(od["factor"]))
        if op.kind not in OP_KINDS or op.id in dag.op_nodes:
            raise DagError(f"malformed op-node {op.id}")
        for child in op.children:
            if child not in dag.eq_nodes:
                raise DagError(f"op-node {op.id} references unknown eq-node {child}")
        dag.op_nodes[op.id] = op
        dag._op_index[(op.kind, op.detail, op.children)] = op.id
    expected_ao = sorted([o.id, c] for o in dag.op_nodes.values() for c in o.children)
    if doc.get("arcs", {}).get("op_to_eq", expected_ao) != expected_ao:
        raise DagError("op_to_eq arcs disagree with op-node children")
    for eq_id, op_id in doc.get("arcs", {}).get("eq_to_op", []):
        if eq_id not in dag.eq_nodes or op_id not in dag.op_nodes:
            raise DagError(f"arc references unknown node ({eq_id}, {op_id})")
        dag.eq_nodes[eq_id].child_ops.append(op_id)
    for query_id, eq_id in doc.get("roots", {}).items():
        register_root(dag, query_id, int(eq_id))
    dag._next_eq = max(dag.eq_nodes, default=-1) + 1
    dag._next_op = max(dag.op_nodes, default=-1) + 1
    return dag
