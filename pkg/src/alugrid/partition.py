"""Macro-level load balancing: weights, Morton ordering, 1D cuts and plans.

Method ids follow the usual numbering of the grid manager:

====  ===========================================
id    meaning
====  ===========================================
0     NONE, keep the current distribution
1     COLLECT, move everything to rank 0
4     SFC cut with locally computed linkage
9     SFC cut, linkage discovered by exchange
11-15 external partitioners (plug-in registry)
====  ===========================================
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

METHOD_NONE = 0
METHOD_COLLECT = 1
METHOD_SFC_LINKAGE = 4
METHOD_SFC = 9
EXTERNAL_METHODS = (11, 12, 13, 14, 15)
KNOWN_METHODS = (0, 1, 4, 9) + EXTERNAL_METHODS

CONFIG_NAME = "alugrid.cfg"


class PartitionError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LBConfig:
    lb_under: float = 0.0
    lb_over: float = 1.2
    method: int = METHOD_SFC_LINKAGE

    def __post_init__(self):
        if not self.lb_under >= 0.0:
            raise ConfigError(f"lbUnder must be >= 0, got {self.lb_under}")
        if not self.lb_over >= 1.0:
            raise ConfigError(f"lbOver must be >= 1, got {self.lb_over}")


def parse_config(text: str, source: str = CONFIG_NAME) -> LBConfig:
    tokens = text.split()
    if len(tokens) < 3:
        raise ConfigError(f"{source}: expected 3 tokens (lbUnder lbOver methodId), found {len(tokens)}")
    names = ("lbUnder", "lbOver", "methodId")
    vals = []
    for name, tok, conv in zip(names, tokens, (float, float, int)):
        try:
            vals.append(conv(tok))
        except ValueError:
            raise ConfigError(f"{source}: cannot parse {name} from token {tok!r}") from None
    return LBConfig(*vals)


def config_path() -> Path:
    env = os.environ.get("ALUGRID_CFG")
    return Path(env) if env else Path.cwd() / CONFIG_NAME


def load_config(path: str | os.PathLike | None = None) -> LBConfig:
    """Read ``alugrid.cfg``; defaults apply when the file does not exist."""
    p = Path(path) if path is not None else config_path()
    if not p.exists():
        if path is not None or os.environ.get("ALUGRID_CFG"):
            raise ConfigError(f"configuration file {p} does not exist")
        return LBConfig()
    return parse_config(p.read_text(), str(p))


# ----------------------------------------------------------------------
# weights, keys, ordering


def element_weight(macro, weights: Callable | None = None) -> int:
    """Leaf count below a macro element, or the user weight of its root entity."""
    if weights is None:
        return sum(1 for _ in macro.root.leaves())
    w = weights(macro.root)
    if int(w) != w or w <= 0:
        raise PartitionError(f"nonpositive weight {w!r} for macro element {macro.macro_id}")
    return int(w)


def sfc_bits(dim: int) -> int:
    return 31 if dim == 2 else 21


def sfc_key(point: Sequence[float], bbox, bits: int | None = None) -> int:
    """Morton key of ``point`` inside ``bbox = (lower, upper)``; outside points are clamped."""
    lo, hi = bbox
    dim = len(lo)
    b = sfc_bits(dim) if bits is None else bits
    top = (1 << b) - 1
    q = []
    for a in range(dim):
        ext = hi[a] - lo[a]
        if not ext > 0:
            raise ValueError("degenerate bounding box")
        t = (point[a] - lo[a]) / ext
        c = int(t * (1 << b)) if t > 0 else 0
        q.append(min(c, top))
    key = 0
    for bit in range(b - 1, -1, -1):
        for a in range(dim - 1, -1, -1):
            key = (key << 1) | ((q[a] >> bit) & 1)
    return key


def order_by_sfc(macros: Iterable, pre_ordered: bool = False) -> list:
    """Sort macro elements by ``(sfc_key, macro_id)`` unless the input is flagged as ordered."""
    items = list(macros)
    if pre_ordered:
        return items
    return sorted(items, key=lambda m: (m.sfc_key, m.macro_id))


def block_loads(weights: Sequence[int], ranks: Sequence[int], nranks: int) -> list[int]:
    loads = [0] * nranks
    for w, r in zip(weights, ranks):
        loads[r] += w
    return loads


def partition1d(weights: Sequence[int], nranks: int) -> list[int]:
    """Contiguous cut of a weighted sequence into ``nranks`` blocks by weight midpoints."""
    m = len(weights)
    if m == 0:
        raise PartitionError("cannot partition an empty weight list")
    if nranks < 1:
        raise PartitionError("rank count must be >= 1")
    total = 0
    for w in weights:
        if w < 1:
            raise PartitionError(f"nonpositive weight {w}")
        total += w
    ranks = []
    prefix = 0
    for w in weights:
        r = ((2 * prefix + w) * nranks) // (2 * total)
        ranks.append(min(max(r, 0), nranks - 1))
        prefix += w
    if m >= nranks:
        ranks = _repair_empty(list(weights), ranks, nranks)
    return ranks


def _repair_empty(weights: list[int], ranks: list[int], nranks: int) -> list[int]:
    counts = [0] * nranks
    for r in ranks:
        counts[r] += 1

    def loads() -> list[int]:
        out = []
        pos = 0
        for c in counts:
            out.append(sum(weights[pos : pos + c]))
            pos += c
        return out

    while 0 in counts:
        r = counts.index(0)
        ld = loads()
        donors = [s for s in (r - 1, r + 1) if 0 <= s < nranks and counts[s] >= 2]
        if donors:
            s = max(donors, key=lambda d: (ld[d], -d))
        else:
            cands = [s for s in range(nranks) if counts[s] >= 2]
            s = min(cands, key=lambda d: (abs(d - r), d))
        counts[s] -= 1
        counts[r] += 1
    out = []
    for r, c in enumerate(counts):
        out.extend([r] * c)
    return out


def should_rebalance(counts: Sequence[float], cfg: LBConfig) -> bool:
    """True iff the heaviest rank exceeds ``lbOver * mean`` or the lightest is below ``lbUnder * mean``."""
    p = len(counts)
    if p == 0:
        return False
    mean = sum(counts) / p
    return max(counts) > cfg.lb_over * mean or min(counts) < cfg.lb_under * mean


def imbalance_ratio(counts: Sequence[float]) -> float:
    mean = sum(counts) / len(counts)
    return max(counts) / mean if mean > 0 else 1.0


# ----------------------------------------------------------------------
# plans


@dataclass
class PartitionPlan:
    """``destination`` maps macro ids to ranks; ``import_ranks`` is None when unknown."""

    destination: dict
    import_ranks: set | None = None
    global_view: bool = False
    method: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SfcEntry:
    key: int
    macro_id: tuple
    weight: int
    owner: int


def sfc_destinations(entries: Sequence[SfcEntry], nranks: int) -> dict:
    order = sorted(entries, key=lambda e: (e.key, e.macro_id))
    ranks = partition1d([e.weight for e in order], nranks)
    return {e.macro_id: r for e, r in zip(order, ranks)}


def import_ranks_for(rank: int, destination: dict, owners: dict) -> set[int]:
    """Ranks that will send macro elements to ``rank`` under a globally known plan."""
    return {owners[mid] for mid, d in destination.items() if d == rank and owners[mid] != rank}


_EXTERNAL: dict[int, Callable] = {}


def register_partitioner(method_id: int, fn: Callable | None) -> None:
    """Install (or with ``None`` remove) an external partitioner for ids 11-15.

    ``fn(graph, nranks, rank)`` receives this rank's :class:`DualGraph` and
    returns a mapping from local macro ids to destination ranks.
    """
    if method_id not in EXTERNAL_METHODS:
        raise PartitionError(f"unknown method {method_id}: plug-ins use ids 11-15")
    if fn is None:
        _EXTERNAL.pop(method_id, None)
    else:
        _EXTERNAL[method_id] = fn


def external_partitioner(method_id: int) -> Callable:
    fn = _EXTERNAL.get(method_id)
    if fn is None:
        raise PartitionError(f"method unavailable: no partitioner registered for id {method_id}")
    return fn


def check_method(method_id: int) -> None:
    if method_id not in KNOWN_METHODS:
        raise PartitionError(f"unknown method {method_id}")


def compute_plan(method_id: int, entries: Sequence[SfcEntry], nranks: int, rank: int, owners: dict | None = None) -> PartitionPlan:
    """Plan from globally known entries (methods 0, 1, 4 and 9)."""
    check_method(method_id)
    own = owners if owners is not None else {e.macro_id: e.owner for e in entries}
    if method_id == METHOD_NONE:
        dest = {e.macro_id: e.owner for e in entries}
        return PartitionPlan(dest, set(), True, method_id)
    if method_id == METHOD_COLLECT:
        dest = {e.macro_id: 0 for e in entries}
        return PartitionPlan(dest, import_ranks_for(rank, dest, own), True, method_id)
    if method_id in EXTERNAL_METHODS:
        external_partitioner(method_id)
        raise PartitionError("external methods need the dual graph; use the runtime entry point")
    dest = sfc_destinations(entries, nranks)
    if method_id == METHOD_SFC_LINKAGE:
        return PartitionPlan(dest, import_ranks_for(rank, dest, own), True, method_id)
    return PartitionPlan(dest, None, False, method_id)


# ----------------------------------------------------------------------
# dual graph


@dataclass
class DualGraph:
    """Macro elements as nodes (leaf-count weights), shared macro faces as weighted edges."""

    nodes: dict = field(default_factory=dict)
    edges: dict = field(default_factory=dict)
    owner: dict = field(default_factory=dict)

    def neighbors(self, node) -> list:
        out = []
        for a, b in self.edges:
            if a == node:
                out.append(b)
            elif b == node:
                out.append(a)
        return sorted(out)

    def edge_weight(self, a, b) -> int:
        return self.edges[(a, b) if a < b else (b, a)]


def dual_graph(view, weights: Callable | None = None) -> DualGraph:
    """Build the dual graph of the interior macro elements seen through a macro view."""
    g = DualGraph()
    for m in view.interior():
        g.nodes[m.macro_id] = element_weight(m, weights)
        g.owner[m.macro_id] = view.master(m)
        for f, nid in enumerate(m.neighbor_ids):
            if nid is None:
                continue
            key = (m.macro_id, nid) if m.macro_id < nid else (nid, m.macro_id)
            if key not in g.edges:
                g.edges[key] = view.weight((m, f))
            if nid not in g.owner:
                g.owner[nid] = view.owners.get(nid)
    return g
