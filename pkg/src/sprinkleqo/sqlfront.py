"""Parser for the supported SQL subset.

Supported shape::

    SELECT item [, item ...]
    FROM relation [, relation ...] | (subquery) alias
    [WHERE cond [AND cond ...]]
    [GROUP BY attr [, attr ...]]
    [HAVING agg(attr) op literal]
    [ORDER BY attr [ASC|DESC] [, ...]]

where ``item`` is ``*``, an attribute, or ``agg(attr)`` with agg in
sum/avg/count/min/max; ``cond`` is ``attr = attr`` (a join), ``attr op
literal`` (a select, op in = < > <= >= <>), or ``attr IN (subquery)``.
Disjunction is not supported.  Identifiers and literals are lowercased and
every condition gets a canonical single-spaced text form; that text is the
key for selectivity overrides and memo signatures.  Date literals are kept
as ISO-8601 strings and compare lexically.

One level of uncorrelated IN- or FROM-subquery is allowed.  Cross products
are rejected: the join conditions (plus a subquery link) must connect every
FROM relation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .catalog import Catalog, lookup_ssf, resolve_jsf
from .errors import ParseError, ValidationError

AttrRef = tuple[str, str]

_OPERATORS = ("<=", ">=", "<>", "!=", "=", "<", ">")
_AGG_FUNCS = ("sum", "avg", "count", "min", "max")
_IDENT = r"[a-z_][a-z0-9_]*"
_REF_RE = re.compile(rf"^({_IDENT})\.({_IDENT})$|^({_IDENT})$")
_NUMBER_RE = re.compile(r"^-?\d+(\.\d+)?$")


def format_literal(value: int | float | str) -> str:
    if isinstance(value, str):
        return f"'{value}'"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class JoinCondition:
    """Equality between attributes of two relations; sides sorted for canonicity."""

    left: AttrRef
    right: AttrRef
    jsf: float

    @staticmethod
    def make(a: AttrRef, b: AttrRef, jsf: float) -> "JoinCondition":
        left, right = sorted((a, b))
        return JoinCondition(left=left, right=right, jsf=jsf)

    def canonical(self) -> str:
        return f"{self.left[0]}.{self.left[1]} = {self.right[0]}.{self.right[1]}"

    def relations(self) -> tuple[str, str]:
        return self.left[0], self.right[0]


@dataclass(frozen=True)
class SelectCondition:
    relation: str
    attribute: str
    operator: str
    literal: int | float | str
    ssf: float

    def canonical(self) -> str:
        return (f"{self.relation}.{self.attribute} {self.operator} "
                f"{format_literal(self.literal)}")


@dataclass(frozen=True)
class HavingCondition:
    """Single aggregate predicate applied to grouped output."""

    func: str
    relation: str | None
    attribute: str
    operator: str
    literal: int | float | str
    ssf: float

    def arg(self) -> str:
        if self.attribute == "*":
            return "*"
        return f"{self.relation}.{self.attribute}"

    def canonical(self) -> str:
        return (f"having {self.func}({self.arg()}) {self.operator} "
                f"{format_literal(self.literal)}")


@dataclass(frozen=True)
class ProjectionItem:
    kind: str  # 'column' or 'aggregate'
    func: str | None
    relation: str | None
    attribute: str

    def render(self) -> str:
        ref = self.attribute if self.relation is None else f"{self.relation}.{self.attribute}"
        if self.kind == "aggregate":
            return f"{self.func}({ref})"
        return ref


@dataclass(frozen=True)
class OrderItem:
    relation: str
    attribute: str
    descending: bool = False

    def render(self) -> str:
        return f"{self.relation}.{self.attribute} {'desc' if self.descending else 'asc'}"


@dataclass(frozen=True)
class Subquery:
    """One uncorrelated nested query, linked by IN or used as a FROM table."""

    form: str  # 'in' or 'from'
    alias: str
    query: "Query"
    outer_attr: AttrRef | None
    inner_column: str
    link_jsf: float
    column_sources: dict[str, AttrRef] = field(default_factory=dict)

    def __hash__(self):  # column_sources is informational only
        return hash((self.form, self.alias, self.query, self.outer_attr, self.inner_column))


@dataclass(frozen=True)
class Query:
    tables: frozenset[str]
    joins: tuple[JoinCondition, ...]
    selects: tuple[SelectCondition, ...]
    projections: tuple[ProjectionItem, ...]  # empty means SELECT *
    group_by: tuple[AttrRef, ...]
    having: HavingCondition | None
    order_by: tuple[OrderItem, ...]
    subquery: Subquery | None = None

    def n_operations(self) -> int:
        return len(self.joins) + len(self.selects)


def extract_join_set(query: Query) -> tuple[JoinCondition, ...]:
    """Deduplicated join conditions sorted by canonical text."""
    by_text = {j.canonical(): j for j in query.joins}
    return tuple(by_text[t] for t in sorted(by_text))


# --- tokenizer-level helpers -------------------------------------------------

def _scan_clauses(text: str) -> dict[str, str]:
    """Split a statement into clause texts, honoring parens and quotes."""
    keywords = ["select", "from", "where", "group by", "having", "order by"]
    lowered = text
    positions: list[tuple[int, str]] = []
    depth = 0
    in_quote = False
    i = 0
    while i < len(lowered):
        ch = lowered[i]
        if in_quote:
            if ch == "'":
                in_quote = False
        elif ch == "'":
            in_quote = True
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced parentheses")
        elif depth == 0:
            for kw in keywords:
                end = i + len(kw)
                if lowered.startswith(kw, i) and (i == 0 or not lowered[i - 1].isalnum()) \
                        and (end == len(lowered) or not lowered[end].isalnum()):
                    positions.append((i, kw))
                    i = end - 1
                    break
        i += 1
    if in_quote:
        raise ParseError("unterminated string literal")
    if depth != 0:
        raise ParseError("unbalanced parentheses")
    if not positions or positions[0][1] != "select" or positions[0][0] != 0:
        raise ParseError("statement must start with SELECT")
    order = {kw: n for n, kw in enumerate(keywords)}
    for (_, a), (_, b) in zip(positions, positions[1:]):
        if order[b] <= order[a]:
            raise ParseError(f"clause {b.upper()} out of order")
    clauses: dict[str, str] = {}
    for idx, (pos, kw) in enumerate(positions):
        end = positions[idx + 1][0] if idx + 1 < len(positions) else len(lowered)
        clauses[kw] = lowered[pos + len(kw):end].strip()
    if "from" not in clauses:
        raise ParseError("missing FROM clause")
    return clauses


def _split_top_level(text: str, separator: str) -> list[str]:
    """Split on a separator token at paren depth zero, outside quotes."""
    parts: list[str] = []
    depth = 0
    in_quote = False
    start = 0
    i = 0
    sep = separator
    while i < len(text):
        ch = text[i]
        if in_quote:
            if ch == "'":
                in_quote = False
            i += 1
            continue
        if ch == "'":
            in_quote = True
            i += 1
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and text.startswith(sep, i):
            before_ok = sep != " and " or True  # separator embeds its own spaces
            if before_ok:
                parts.append(text[start:i].strip())
                i += len(sep)
                start = i
                continue
        i += 1
    parts.append(text[start:].strip())
    return [p for p in parts if p]


def _parse_literal(text: str) -> int | float | str:
    text = text.strip()
    m = re.match(r"^date\s*'([^']*)'$", text)
    if m:
        return m.group(1)
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    if _NUMBER_RE.match(text):
        return float(text) if "." in text else int(text)
    raise ParseError(f"unsupported literal {text!r}")


class _Resolver:
    """Attribute resolution over the FROM tables of one query."""

    def __init__(self, catalog: Catalog, tables: list[str],
                 alias_columns: dict[str, dict[str, AttrRef]]):
        self.catalog = catalog
        self.tables = tables
        self.alias_columns = alias_columns  # alias -> column -> source AttrRef

    def has(self, relation: str, attribute: str) -> bool:
        if relation in self.alias_columns:
            return attribute in self.alias_columns[relation]
        if relation in self.catalog.relations:
            return self.catalog.relations[relation].has_attribute(attribute)
        return False

    def distinct(self, relation: str, attribute: str) -> int:
        if relation in self.alias_columns:
            src = self.alias_columns[relation][attribute]
            return self.catalog.relation(src[0]).attribute(src[1]).distinct_count
        return self.catalog.relation(relation).attribute(attribute).distinct_count

    def resolve(self, text: str, outer_tables: frozenset[str] = frozenset()) -> AttrRef:
        m = _REF_RE.match(text.strip())
        if not m:
            raise ParseError(f"expected an attribute reference, got {text!r}")
        if m.group(1):
            relation, attribute = m.group(1), m.group(2)
            if relation not in self.tables:
                if relation in outer_tables:
                    raise ParseError(
                        f"correlated subqueries are unsupported ({relation}.{attribute} "
                        "references an outer relation)")
                raise ValidationError(f"relation {relation!r} is not in the FROM clause")
            if not self.has(relation, attribute):
                raise ValidationError(f"unknown attribute {relation}.{attribute}")
            return relation, attribute
        name = m.group(3)
        matches = [t for t in self.tables if self.has(t, name)]
        if not matches:
            raise ValidationError(f"unknown attribute {name!r}")
        if len(matches) > 1:
            raise ValidationError(
                f"attribute {name!r} is ambiguous across {sorted(matches)}")
        return matches[0], name


def _parse_select_items(text: str, resolver: _Resolver) -> tuple[ProjectionItem, ...]:
    if not text.strip():
        raise ParseError("empty select list")
    if text.strip() == "*":
        return ()
    items: list[ProjectionItem] = []
    for part in _split_top_level(text, ","):
        m = re.match(rf"^({'|'.join(_AGG_FUNCS)})\s*\(\s*(.+?)\s*\)$", part)
        if m:
            func, arg = m.group(1), m.group(2)
            if arg == "*":
                if func != "count":
                    raise ParseError(f"{func}(*) is not supported")
                items.append(ProjectionItem("aggregate", "count", None, "*"))
                continue
            rel, attr = resolver.resolve(arg)
            items.append(ProjectionItem("aggregate", func, rel, attr))
            continue
        if part == "*":
            raise ParseError("'*' cannot be mixed with other select items")
        rel, attr = resolver.resolve(part)
        items.append(ProjectionItem("column", None, rel, attr))
    return tuple(items)


def _split_condition(text: str) -> tuple[str, str, str]:
    depth = 0
    in_quote = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_quote:
            if ch == "'":
                in_quote = False
        elif ch == "'":
            in_quote = True
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0:
            for op in _OPERATORS:
                if text.startswith(op, i):
                    return text[:i].strip(), ("<>" if op == "!=" else op), text[i + len(op):].strip()
        i += 1
    raise ParseError(f"no comparison operator in condition {text!r}")


def _connectivity(tables: set[str], edges: list[tuple[str, str]]) -> None:
    if len(tables) <= 1:
        return
    adjacency: dict[str, set[str]] = {t: set() for t in tables}
    for a, b in edges:
        if a in adjacency and b in adjacency:
            adjacency[a].add(b)
            adjacency[b].add(a)
    seen: set[str] = set()
    stack = [sorted(tables)[0]]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(adjacency[n] - seen)
    if seen != tables:
        missing = sorted(tables - seen)
        raise ValidationError(
            f"disconnected join graph (cross products unsupported): {missing} unreachable")


def parse_query(sql_text: str, catalog: Catalog, *, _depth: int = 0,
                _outer_tables: frozenset[str] = frozenset()) -> Query:
    """Parse one statement of the supported subset into a validated Query."""
    text = " ".join(sql_text.strip().rstrip(";").lower().split())
    if not text:
        raise ParseError("empty statement")
    if _depth > 1:
        raise ParseError("subqueries may not nest beyond one level")
    if re.search(r"\bor\b", re.sub(r"'[^']*'", "''", text.replace("order by", " "))):
        raise ParseError("OR is not supported; WHERE must be a conjunction")
    clauses = _scan_clauses(text)

    tables: list[str] = []
    subquery: Subquery | None = None
    alias_columns: dict[str, dict[str, AttrRef]] = {}
    for part in _split_top_level(clauses["from"], ","):
        m = re.match(rf"^\(\s*(select\b.*)\)\s*({_IDENT})$", part)
        if m:
            if subquery is not None:
                raise ParseError("at most one subquery is supported")
            inner = parse_query(m.group(1), catalog, _depth=_depth + 1,
                                _outer_tables=frozenset(tables) | _outer_tables)
            alias = m.group(2)
            columns, sources = _subquery_columns(inner)
            subquery = Subquery(form="from", alias=alias, query=inner,
                                outer_attr=None, inner_column=columns[0],
                                link_jsf=1.0, column_sources=sources)
            alias_columns[alias] = sources
            tables.append(alias)
            continue
        if not re.match(rf"^{_IDENT}$", part):
            raise ParseError(f"unsupported FROM item {part!r}")
        if part not in catalog.relations:
            raise ValidationError(f"unknown relation {part!r}")
        tables.append(part)
    if not tables:
        raise ParseError("empty FROM clause")
    if len(set(tables)) != len(tables):
        raise ParseError("duplicate FROM relations are not supported")

    resolver = _Resolver(catalog, tables, alias_columns)
    projections = _parse_select_items(clauses["select"], resolver)

    joins: list[JoinCondition] = []
    selects: list[SelectCondition] = []
    edges: list[tuple[str, str]] = []
    for cond in _split_top_level(clauses.get("where", ""), " and "):
        m = re.match(rf"^(.+?)\s+in\s*\(\s*(select\b.*)\)$", cond)
        if m:
            if subquery is not None:
                raise ParseError("at most one subquery is supported")
            outer_ref = resolver.resolve(m.group(1))
            inner = parse_query(m.group(2), catalog, _depth=_depth + 1,
                                _outer_tables=frozenset(tables) | _outer_tables)
            columns, sources = _subquery_columns(inner)
            if len(columns) != 1:
                raise ParseError("IN-subquery must select exactly one column")
            alias = "subq1"
            src = sources[columns[0]]
            d_outer = resolver.distinct(*outer_ref)
            d_inner = catalog.relation(src[0]).attribute(src[1]).distinct_count
            subquery = Subquery(form="in", alias=alias, query=inner,
                                outer_attr=outer_ref, inner_column=columns[0],
                                link_jsf=1.0 / max(d_outer, d_inner),
                                column_sources=sources)
            edges.append((outer_ref[0], alias))
            continue
        left_text, op, right_text = _split_condition(cond)
        left = resolver.resolve(left_text, _outer_tables)
        right_is_ref = _REF_RE.match(right_text) is not None
        if right_is_ref:
            try:
                right = resolver.resolve(right_text, _outer_tables)
            except ParseError:
                raise  # correlated reference: must not degrade into a literal
            except ValidationError:
                right = None
        else:
            right = None
        if right is not None:
            if op != "=":
                raise ParseError(f"join conditions must use '=', got {op!r}")
            if left[0] == right[0]:
                raise ParseError(
                    f"predicates between attributes of one relation are unsupported: {cond!r}")
            jsf = _join_jsf(catalog, resolver, left, right)
            joins.append(JoinCondition.make(left, right, jsf))
            edges.append((left[0], right[0]))
            continue
        literal = _parse_literal(right_text)
        if left[0] in alias_columns:
            raise ParseError("select predicates on subquery columns are unsupported")
        canonical = f"{left[0]}.{left[1]} {op} {format_literal(literal)}"
        ssf = lookup_ssf(catalog, left[0], left[1], op, canonical)
        selects.append(SelectCondition(left[0], left[1], op, literal, ssf))

    group_by: list[AttrRef] = []
    if "group by" in clauses:
        for part in _split_top_level(clauses["group by"], ","):
            group_by.append(resolver.resolve(part))
    group_by = sorted(set(group_by))

    having = None
    if "having" in clauses:
        if not group_by:
            raise ParseError("HAVING requires GROUP BY")
        having = _parse_having(clauses["having"], resolver, catalog)

    order_by: list[OrderItem] = []
    if "order by" in clauses:
        for part in _split_top_level(clauses["order by"], ","):
            m = re.match(r"^(.*?)(?:\s+(asc|desc))?$", part)
            rel, attr = resolver.resolve(m.group(1))
            order_by.append(OrderItem(rel, attr, m.group(2) == "desc"))

    join_texts: dict[str, JoinCondition] = {}
    for j in joins:
        join_texts.setdefault(j.canonical(), j)
    select_texts: dict[str, SelectCondition] = {}
    for s in selects:
        select_texts.setdefault(s.canonical(), s)

    query = Query(
        tables=frozenset(tables),
        joins=tuple(join_texts[t] for t in sorted(join_texts)),
        selects=tuple(select_texts[t] for t in sorted(select_texts)),
        projections=projections,
        group_by=tuple(group_by),
        having=having,
        order_by=tuple(order_by),
        subquery=subquery,
    )
    _connectivity(set(tables) | ({subquery.alias} if subquery and subquery.form == "in" else set()),
                  edges)
    _validate_scopes(query, resolver)
    return query


def _join_jsf(catalog: Catalog, resolver: _Resolver, left: AttrRef, right: AttrRef) -> float:
    base_side = left[0] in catalog.relations and right[0] in catalog.relations
    if base_side:
        return resolve_jsf(catalog, left, right)
    return 1.0 / max(resolver.distinct(*left), resolver.distinct(*right))


def _subquery_columns(inner: Query) -> tuple[list[str], dict[str, AttrRef]]:
    if not inner.projections:
        raise ParseError("subqueries must name their output columns (no '*')")
    columns: list[str] = []
    sources: dict[str, AttrRef] = {}
    for item in inner.projections:
        if item.kind != "column":
            raise ParseError("aggregates in subquery select lists are unsupported")
        if item.attribute in sources:
            raise ParseError(f"duplicate subquery output column {item.attribute!r}")
        columns.append(item.attribute)
        sources[item.attribute] = (item.relation, item.attribute)
    return columns, sources


def _parse_having(text: str, resolver: _Resolver, catalog: Catalog) -> HavingCondition:
    left_text, op, right_text = _split_condition(text)
    m = re.match(rf"^({'|'.join(_AGG_FUNCS)})\s*\(\s*(.+?)\s*\)$", left_text)
    if not m:
        raise ParseError("HAVING must compare a single aggregate to a literal")
    func, arg = m.group(1), m.group(2)
    literal = _parse_literal(right_text)
    if arg == "*":
        if func != "count":
            raise ParseError(f"{func}(*) is not supported")
        relation, attribute = None, "*"
    else:
        relation, attribute = resolver.resolve(arg)
    probe = HavingCondition(func, relation, attribute, op, literal, ssf=0.0)
    ssf = catalog.stats.overrides.get(probe.canonical(), catalog.stats.default_ssf)
    return HavingCondition(func, relation, attribute, op, literal, ssf)


def _validate_scopes(query: Query, resolver: _Resolver) -> None:
    for item in query.projections:
        if item.relation is not None and not resolver.has(item.relation, item.attribute):
            raise ValidationError(f"unknown attribute {item.relation}.{item.attribute}")
    if query.group_by:
        for item in query.projections:
            if item.kind == "column" and (item.relation, item.attribute) not in query.group_by:
                raise ValidationError(
                    f"{item.relation}.{item.attribute} must appear in GROUP BY or an aggregate")


def render_query(query: Query) -> str:
    """Canonical SQL text; parse(render(parse(x))) == parse(x)."""
    if query.projections:
        select_list = ", ".join(item.render() for item in query.projections)
    else:
        select_list = "*"
    from_items: list[str] = []
    for table in sorted(query.tables):
        if query.subquery is not None and query.subquery.form == "from" \
                and table == query.subquery.alias:
            from_items.append(f"({render_query(query.subquery.query)}) {table}")
        else:
            from_items.append(table)
    parts = [f"select {select_list}", f"from {', '.join(from_items)}"]
    conds = [j.canonical() for j in query.joins] + [s.canonical() for s in query.selects]
    if query.subquery is not None and query.subquery.form == "in":
        sub = query.subquery
        conds.append(f"{sub.outer_attr[0]}.{sub.outer_attr[1]} in "
                     f"({render_query(sub.query)})")
    if conds:
        parts.append("where " + " and ".join(conds))
    if query.group_by:
        parts.append("group by " + ", ".join(f"{r}.{a}" for r, a in query.group_by))
    if query.having is not None:
        h = query.having
        parts.append(f"having {h.func}({h.arg()}) {h.operator} {format_literal(h.literal)}")
    if query.order_by:
        parts.append("order by " + ", ".join(item.render() for item in query.order_by))
    return " ".join(parts)


def query_required_attrs(query: Query, catalog: Catalog) -> dict[str, set[str]]:
    """Attributes each base relation must supply for this query.

    SELECT * marks every attribute of every FROM relation as required.
    """
    required: dict[str, set[str]] = {t: set() for t in query.tables}

    def note(rel: str | None, attr: str) -> None:
        if rel is not None and rel in required and attr != "*":
            required[rel].add(attr)

    if not query.projections:
        for t in query.tables:
            if t in catalog.relations:
                required[t] = {a.name for a in catalog.relations[t].attributes}
    for item in query.projections:
        note(item.relation, item.attribute)
    for j in query.joins:
        note(j.left[0], j.left[1])
        note(j.right[0], j.right[1])
    for s in query.selects:
        note(s.relation, s.attribute)
    for rel, attr in query.group_by:
        note(rel, attr)
    if query.having is not None:
        note(query.having.relation, query.having.attribute)
    for item in query.order_by:
        note(item.relation, item.attribute)
    if query.subquery is not None and query.subquery.outer_attr is not None:
        note(query.subquery.outer_attr[0], query.subquery.outer_attr[1])
    return required


# -- clause-level operator texts -------------------------------------------

def groupby_text(query: Query) -> str:
    return "groupby(" + ", ".join(f"{r}.{a}" for r, a in query.group_by) + ")"


def orderby_text(query: Query) -> str:
    return "orderby(" + ", ".join(item.render() for item in query.order_by) + ")"


def project_text(attrs) -> str:
    return "project(" + ", ".join(sorted(attrs)) + ")"


def groupby_distinct_product(query: Query, catalog: Catalog) -> float:
    """Upper bound on group count: product of grouping-attribute distincts."""
    product = 1.0
    for rel, attr in query.group_by:
        if rel in catalog.relations and catalog.relations[rel].has_attribute(attr):
            product *= catalog.relations[rel].attribute(attr).distinct_count
    return product


def output_attrs(query: Query, catalog: Catalog) -> set[str]:
    """Qualified attributes the final result must retain.

    Covers the projection list (aggregate arguments included), group-by keys,
    the having argument, and order-by keys.  SELECT * retains everything.
    """
    attrs: set[str] = set()
    if not query.projections:
        for t in sorted(query.tables):
            if t in catalog.relations:
                attrs.update(f"{t}.{a.name}" for a in catalog.relations[t].attributes)
            elif query.subquery is not None and t == query.subquery.alias:
                attrs.update(f"{t}.{c}" for c in query.subquery.column_sources)
        return attrs
    for item in query.projections:
        if item.relation is not None and item.attribute != "*":
            attrs.add(f"{item.relation}.{item.attribute}")
    for rel, attr in query.group_by:
        attrs.add(f"{rel}.{attr}")
    if query.having is not None and query.having.attribute != "*":
        attrs.add(f"{query.having.relation}.{query.having.attribute}")
    for item in query.order_by:
        attrs.add(f"{item.relation}.{item.attribute}")
    return attrs


def all_query_attrs(query: Query, catalog: Catalog) -> set[str]:
    """Every qualified attribute available from the query's FROM relations."""
    attrs: set[str] = set()
    for t in sorted(query.tables):
        if t in catalog.relations:
            attrs.update(f"{t}.{a.name}" for a in catalog.relations[t].attributes)
        elif query.subquery is not None and t == query.subquery.alias:
            attrs.update(f"{t}.{c}" for c in query.subquery.column_sources)
    return attrs
