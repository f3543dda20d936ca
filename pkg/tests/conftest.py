"""Shared fixtures: catalogs, random schema/query generators, oracles."""

from __future__ import annotations

import json
import pathlib
import random

import pytest

from sprinkleqo.catalog import Catalog, load_catalog, load_catalog_file

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def company_catalog() -> Catalog:
    return load_catalog_file(str(FIXTURES / "company" / "schema.json"))


@pytest.fixture(scope="session")
def tpch_catalog() -> Catalog:
    return load_catalog_file(str(FIXTURES / "tpch" / "schema.json"))


def fixture_sql(group: str, name: str) -> str:
    return (FIXTURES / group / f"{name}.sql").read_text()


def make_catalog(relations, fk_edges, default_ssf=0.1, overrides=None) -> Catalog:
    doc = {
        "relations": relations,
        "fk_edges": fk_edges,
        "stats": {"default_ssf": default_ssf, "overrides": overrides or {}},
    }
    return load_catalog(json.dumps(doc))


def random_schema(rng: random.Random, max_edges: int = 6) -> Catalog:
    """Random multi-relation catalog with up to max_edges FK edges."""
    n_rel = rng.randint(2, 6)
    relations = []
    for i in range(n_rel):
        card = rng.choice([10, 100, 1000, 5000])
        relations.append({
            "name": f"r{i}",
            "cardinality": float(card),
            "attributes": [
                {"name": "a0", "distinct": rng.randint(2, min(50, card))},
                {"name": "a1", "distinct": rng.randint(2, min(50, card))},
                {"name": "b", "distinct": rng.randint(2, min(20, card))},
            ],
        })
    fk_edges, seen = [], set()
    for _ in range(rng.randint(1, max_edges)):
        a, b = rng.sample(range(n_rel), 2)
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        fk_edges.append({
            "left": f"r{key[0]}.a0",
            "right": f"r{key[1]}.a1",
            "jsf": rng.choice([0.001, 0.01, 0.1, 0.5]),
        })
    return make_catalog(relations, fk_edges,
                        default_ssf=rng.choice([0.05, 0.1, 0.3]))


def chain_catalog(n_joins: int, cardinality: float = 1000.0,
                  jsf: float = 0.01) -> Catalog:
    """r0 - r1 - ... - rn chain joined on a0 = a1."""
    relations = []
    for i in range(n_joins + 1):
        relations.append({
            "name": f"r{i}",
            "cardinality": cardinality,
            "attributes": [
                {"name": "a0", "distinct": 100},
                {"name": "a1", "distinct": 100},
                {"name": "b", "distinct": 50},
            ],
        })
    fk_edges = [{"left": f"r{i}.a0", "right": f"r{i + 1}.a1", "jsf": jsf}
                for i in range(n_joins)]
    return make_catalog(relations, fk_edges)


def connected_query_sql(catalog: Catalog, rng: random.Random,
                        max_selects: int = 2, select_rel: str | None = None) -> str:
    """SELECT * over the largest FK-connected component with random selects."""
    comp = max(catalog.graph.components(), key=len)
    rels = sorted(comp)
    conds = [f"{e.left[0]}.{e.left[1]} = {e.right[0]}.{e.right[1]}"
             for e in catalog.graph.edges
             if e.left[0] in comp and e.right[0] in comp]
    for _ in range(rng.randint(0, max_selects)):
        rel = select_rel or rng.choice(rels)
        conds.append(f"{rel}.b > {rng.randint(1, 40)}")
    sql = f"select * from {', '.join(rels)}"
    if conds:
        sql += " where " + " and ".join(conds)
    return sql
