"""Finite-memory defender strategies over a patrolling graph.

A memory assignment gives every vertex v a number of memory elements
mem(v) >= 1.  The defender's state space is the set of pairs (v, m) with
1 <= m <= mem(v).  For every graph edge v -> v' and every pair of memories
(m, m') there is one transition slot ((v, m), (v', m')).  A strategy is a
flat real vector over slot ids; each pair's outgoing slots form one row
that, once normalized, is a probability distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graph import GraphFormatError, PatrollingGraph


class StrategyIndex:
    """Slot/row bookkeeping for one (graph, memory assignment) pair.

    Slots are ordered row-major: rows follow pair order (vertex declaration
    order, then memory index), and inside a row the slots follow the source
    vertex's out-edge declaration order, then destination memory index.
    Row slot ids are therefore contiguous.
    """

    def __init__(self, graph: PatrollingGraph, mem: dict[str, int]):
        for v in graph.vertices:
            if v not in mem:
                raise ValueError(f"memory assignment missing vertex {v!r}")
            if not mem[v] >= 1:
                raise ValueError(f"memory size for vertex {v!r} must be >= 1, got {mem[v]}")
        self.graph = graph
        self.mem = {v: int(mem[v]) for v in graph.vertices}

        # Eligible pairs (vertex index, memory 1..mem(v)), dense ids.
        pairs: list[tuple[int, int]] = []
        for vi, v in enumerate(graph.vertices):
            for m in range(1, self.mem[v] + 1):
                pairs.append((vi, m))
        self.pairs = pairs
        self.pair_id = {p: i for i, p in enumerate(pairs)}
        self.n_pairs = len(pairs)
        self.pair_vertex = np.array([p[0] for p in pairs], dtype=np.int64)
        self.pair_mem = np.array([p[1] for p in pairs], dtype=np.int64)

        slot_src: list[int] = []
        slot_dst: list[int] = []
        slot_time: list[int] = []
        row_ptr = [0]
        for vi, m in pairs:
            src = self.pair_id[(vi, m)]
            for ek in graph.out_edges[vi]:
                wi = int(graph.edge_dst[ek])
                t = int(graph.edge_time[ek])
                for m2 in range(1, self.mem[graph.vertices[wi]] + 1):
                    slot_src.append(src)
                    slot_dst.append(self.pair_id[(wi, m2)])
                    slot_time.append(t)
            row_ptr.append(len(slot_src))
        self.n_slots = len(slot_src)
        self.slot_src = np.array(slot_src, dtype=np.int64)
        self.slot_dst = np.array(slot_dst, dtype=np.int64)
        self.slot_time = np.array(slot_time, dtype=np.int64)
        self.slot_src_vertex = self.pair_vertex[self.slot_src]
        self.slot_dst_vertex = self.pair_vertex[self.slot_dst]
        self.row_ptr = np.array(row_ptr, dtype=np.int64)
        self.slot_row = np.repeat(np.arange(self.n_pairs), np.diff(self.row_ptr))

        # Incoming slots per pair (CSR, slot ids ascending inside each group).
        order = np.argsort(self.slot_dst, kind="stable")
        self.in_ids = order.astype(np.int64)
        counts = np.bincount(self.slot_dst, minlength=self.n_pairs)
        self.in_ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    def row_slice(self, pair: int) -> slice:
        return slice(int(self.row_ptr[pair]), int(self.row_ptr[pair + 1]))

    def row_width(self, pair: int) -> int:
        return int(self.row_ptr[pair + 1] - self.row_ptr[pair])

    def pair_label(self, pair: int) -> tuple[str, int]:
        vi, m = self.pairs[pair]
        return (self.graph.vertices[vi], m)

    def slot_label(self, slot: int) -> tuple[tuple[str, int], tuple[str, int]]:
        return (self.pair_label(int(self.slot_src[slot])), self.pair_label(int(self.slot_dst[slot])))

    def find_slot(self, src: tuple[str, int], dst: tuple[str, int]) -> int:
        """Slot id of ((v, m), (v', m')); raises KeyError if absent."""
        g = self.graph
        sp = self.pair_id[(g.vertex_index[src[0]], src[1])]
        dp = self.pair_id[(g.vertex_index[dst[0]], dst[1])]
        lo, hi = int(self.row_ptr[sp]), int(self.row_ptr[sp + 1])
        for j in range(lo, hi):
            if self.slot_dst[j] == dp:
                return j
        raise KeyError(f"no slot {src} -> {dst}")

    def __repr__(self) -> str:
        return f"StrategyIndex(n_pairs={self.n_pairs}, n_slots={self.n_slots})"


def build_index(g: PatrollingGraph, mem: dict[str, int] | int) -> StrategyIndex:
    """Enumerate eligible pairs and slots for a memory assignment.

    mem may be a single integer applied uniformly to every vertex.
    """
    if isinstance(mem, (int, np.integer)):
        mem = {v: int(mem) for v in g.vertices}
    return StrategyIndex(g, mem)


@dataclass
class Strategy:
    """Flat vector of transition weights, one entry per slot."""

    probs: np.ndarray

    def copy(self) -> "Strategy":
        return Strategy(self.probs.copy())


@dataclass
class NormJacobian:
    """Block-diagonal Jacobian of a row normalization.

    One dense (w x w) block per row, where w is the row width; blocks[r][i, j]
    is d(normalized row entry i) / d(raw row entry j).
    """

    blocks: list[np.ndarray]
    row_ptr: np.ndarray

    def vjp(self, grad: np.ndarray) -> np.ndarray:
        """Pull a gradient over normalized slots back to raw slots (J^T g)."""
        out = np.zeros_like(grad)
        for r, block in enumerate(self.blocks):
            sl = slice(int(self.row_ptr[r]), int(self.row_ptr[r + 1]))
            out[sl] = block.T @ grad[sl]
        return out

    def dense(self, n_slots: int) -> np.ndarray:
        """Materialize the full (n_slots x n_slots) Jacobian (tests only)."""
        out = np.zeros((n_slots, n_slots))
        for r, block in enumerate(self.blocks):
            sl = slice(int(self.row_ptr[r]), int(self.row_ptr[r + 1]))
            out[sl, sl] = block
        return out


def random_strategy(index: StrategyIndex, seed) -> Strategy:
    """Sample a normalized strategy, each row uniform on its simplex.

    Rows are independent symmetric Dirichlet(1) draws, so every slot has
    full support almost surely.  Reproducible from the seed.
    """
    rng = np.random.default_rng(seed)
    probs = np.empty(index.n_slots, dtype=np.float64)
    for r in range(index.n_pairs):
        sl = index.row_slice(r)
        w = sl.stop - sl.start
        probs[sl] = rng.dirichlet(np.ones(w))
    return Strategy(probs)


def _crop_derivative(x: np.ndarray) -> np.ndarray:
    """Subgradient of clip(x, 0, 1): 1 strictly inside (0, 1), else 0."""
    return ((x > 0.0) & (x < 1.0)).astype(np.float64)


# Cropped rows summing below this are treated as all-zero (uniform fallback);
# guards the 1/s^2 Jacobian scale against underflow.
_DEGENERATE_ROW_SUM = 1e-12


def normalize_full(sigma: Strategy, index: StrategyIndex) -> tuple[Strategy, NormJacobian]:
    """Crop every entry to [0, 1], then divide each row by its sum.

    A row whose cropped entries are all zero becomes the uniform distribution
    with a zero Jacobian block.  Accepts arbitrary real input.
    """
    x = np.asarray(sigma.probs, dtype=np.float64)
    c = np.clip(x, 0.0, 1.0)
    cd = _crop_derivative(x)
    # Sequential row sums (reduceat) keep values bit-identical to the
    # vectorized normalize_rows fast path.
    row_sums = np.add.reduceat(c, index.row_ptr[:-1])
    out = np.empty_like(c)
    blocks: list[np.ndarray] = []
    for r in range(index.n_pairs):
        sl = index.row_slice(r)
        cr = c[sl]
        s = row_sums[r]
        w = cr.shape[0]
        if s <= _DEGENERATE_ROW_SUM:
            out[sl] = 1.0 / w
            blocks.append(np.zeros((w, w)))
            continue
        y = cr / s
        out[sl] = y
        # d y_i / d x_j = crop'(x_j) * (delta_ij * s - c_i) / s^2
        block = (np.eye(w) * s - cr[:, None]) / (s * s) * cd[sl][None, :]
        blocks.append(block)
    return Strategy(out), NormJacobian(blocks, index.row_ptr)


def normalize_pivot(
    sigma: Strategy, index: StrategyIndex, pivot: dict[int, int] | None = None
) -> tuple[Strategy, NormJacobian]:
    """Crop, keep non-pivot entries, set each row's pivot to 1 - sum(others).

    pivot maps row id -> slot id; by default the last slot of each row.  When
    1 - sum(others) falls below 0 the pivot is clamped to 0 and the row is
    rescaled to sum 1; the Jacobian is the derivative of that composed map.
    The raw pivot coordinate never influences the output, so its Jacobian
    column is zero.
    """
    x = np.asarray(sigma.probs, dtype=np.float64)
    c = np.clip(x, 0.0, 1.0)
    cd = _crop_derivative(x)
    out = np.empty_like(c)
    blocks: list[np.ndarray] = []
    for r in range(index.n_pairs):
        sl = index.row_slice(r)
        w = sl.stop - sl.start
        p = (pivot[r] if pivot is not None else sl.stop - 1) - sl.start
        if not 0 <= p < w:
            raise ValueError(f"pivot for row {r} outside its slot range")
        cr = c[sl]
        cdr = cd[sl]
        others = np.arange(w) != p
        rest = cr[others].sum()
        pv = 1.0 - rest
        block = np.zeros((w, w))
        y = cr.copy()
        if pv >= 0.0:
            y[p] = pv
            for i in range(w):
                if i == p:
                    block[i, others] = -cdr[others]
                else:
                    block[i, i] = cdr[i]
        else:
            # Pivot underflow: zero the pivot, rescale the rest to sum 1.
            y[p] = 0.0
            y[others] = cr[others] / rest
            idx = np.where(others)[0]
            for a, i in enumerate(idx):
                for j in idx:
                    block[i, j] = cdr[j] * ((1.0 if i == j else 0.0) * rest - cr[i]) / (rest * rest)
        out[sl] = y
        blocks.append(block)
    return Strategy(out), NormJacobian(blocks, index.row_ptr)


def normalize_rows(x: np.ndarray, row_ptr: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized crop-and-scale used in the optimization loop.

    Returns (normalized vector, cropped row sums, crop derivative mask).
    Matches normalize_full on values; pair with normalize_vjp for the
    gradient pullback without materializing Jacobian blocks.
    """
    c = np.clip(x, 0.0, 1.0)
    cd = _crop_derivative(x)
    sums = np.add.reduceat(c, row_ptr[:-1])
    widths = np.diff(row_ptr)
    degenerate = sums <= _DEGENERATE_ROW_SUM
    safe = np.where(degenerate, 1.0, sums)
    y = c / np.repeat(safe, widths)
    if degenerate.any():
        y[np.repeat(degenerate, widths)] = np.repeat(1.0 / widths[degenerate], widths[degenerate])
        cd[np.repeat(degenerate, widths)] = 0.0
    return y, np.repeat(safe, widths), cd


def normalize_vjp(
    y: np.ndarray, sums: np.ndarray, cd: np.ndarray, grad: np.ndarray, row_ptr: np.ndarray
) -> np.ndarray:
    """J^T grad for the crop-and-scale normalization, closed form.

    xi_j = crop'(x_j) * (g_j - <g, y>_row) / S_row, the transpose action of
    the blocks produced by normalize_full.
    """
    widths = np.diff(row_ptr)
    dots = np.add.reduceat(grad * y, row_ptr[:-1])
    return cd * (grad - np.repeat(dots, widths)) / sums


def is_deterministic_update(index: StrategyIndex, sigma: Strategy, eps: float) -> bool:
    """True iff each (pair, successor vertex) has at most one active memory.

    A slot is active when its probability exceeds eps.
    """
    active = sigma.probs > eps
    for r in range(index.n_pairs):
        sl = index.row_slice(r)
        seen: set[int] = set()
        for j in range(sl.start, sl.stop):
            if not active[j]:
                continue
            v = int(index.slot_dst_vertex[j])
            if v in seen:
                return False
            seen.add(v)
    return True


def strategy_to_json(index: StrategyIndex, sigma: Strategy) -> str:
    """Serialize a strategy with its memory assignment.

    Schema::

        {"mem": {vertex: int},
         "rows": [{"from": [vertex, m], "to": [[vertex, m, prob], ...]}]}
    """
    rows = []
    for r in range(index.n_pairs):
        sl = index.row_slice(r)
        v, m = index.pair_label(r)
        to = []
        for j in range(sl.start, sl.stop):
            dv, dm = index.pair_label(int(index.slot_dst[j]))
            to.append([dv, dm, float(sigma.probs[j])])
        rows.append({"from": [v, m], "to": to})
    return json.dumps({"mem": dict(index.mem), "rows": rows}, indent=1)


def strategy_from_json(g: PatrollingGraph, text: str | dict) -> tuple[StrategyIndex, Strategy]:
    """Parse a strategy document against its graph; rebuilds the index."""
    doc = json.loads(text) if isinstance(text, (str, bytes)) else text
    if not isinstance(doc, dict) or "mem" not in doc or "rows" not in doc:
        raise GraphFormatError("strategy document must carry 'mem' and 'rows'")
    index = build_index(g, {v: int(m) for v, m in doc["mem"].items()})
    probs = np.zeros(index.n_slots)
    filled = np.zeros(index.n_slots, dtype=bool)
    for row in doc["rows"]:
        src = (row["from"][0], int(row["from"][1]))
        for dv, dm, p in row["to"]:
            try:
                j = index.find_slot(src, (dv, int(dm)))
            except KeyError as exc:
                raise GraphFormatError(f"strategy references missing slot: {exc}") from exc
            if filled[j]:
                raise GraphFormatError(f"duplicate entry for slot {src} -> {(dv, dm)}")
            probs[j] = float(p)
            filled[j] = True
    return index, Strategy(probs)
