"""Spreading matrices whose columns are user protocol sequences.

A spreading matrix is an L x N binary matrix (L time-slots, N users).  Column
``u`` marks the slots on which user ``u`` repeats its packet.  Matrices are
built as column-regular LDPC parity-check matrices, either by progressive
edge growth or by a randomized search toward a prescribed short-cycle profile.

Indices are 0-based throughout the Python API; the on-disk format stores
1-based row indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np


class InfeasibleDimensionsError(ValueError):
    """Requested (L, N, w_c) cannot give a sparse, overloaded matrix."""


class UnreachableProfileError(RuntimeError):
    """The cycle-profile search gave up before hitting the target census."""


@dataclass(frozen=True)
class CycleCensus:
    len4: int
    len6: int
    len8: int

    @property
    def girth(self) -> float:
        """Shortest cycle length, or ``math.inf`` when no cycle up to 8 exists."""
        for length, count in ((4, self.len4), (6, self.len6), (8, self.len8)):
            if count:
                return length
        return math.inf

    def as_list(self) -> list[int]:
        return [self.len4, self.len6, self.len8]

    def to_dict(self) -> dict:
        girth = self.girth
        return {
            "len4": self.len4,
            "len6": self.len6,
            "len8": self.len8,
            "girth": None if math.isinf(girth) else int(girth),
        }


class SpreadingMatrix:
    """Binary L x N matrix; column ``u`` is the protocol sequence of user ``u``."""

    def __init__(self, entries, col_weight: int | None = None):
        a = np.array(entries, dtype=np.uint8)
        if a.ndim != 2:
            raise ValueError("spreading matrix must be two-dimensional")
        if np.any(a > 1):
            raise ValueError("spreading matrix must be binary")
        a.setflags(write=False)
        self.entries = a
        col_sums = a.sum(axis=0)
        if col_weight is None:
            col_weight = int(col_sums[0]) if a.shape[1] else 0
        self.col_weight = int(col_weight)
        self._supports = None

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def ratio(self) -> float:
        return self.rows / self.cols

    @property
    def row_weights(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    @property
    def col_weights(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    @property
    def row_weight(self) -> float:
        """Nominal row weight w_c / r (exact when the matrix is fully regular)."""
        return self.col_weight * self.cols / self.rows

    def supports(self) -> list[np.ndarray]:
        """Row indices of every column."""
        if self._supports is None:
            self._supports = [np.flatnonzero(self.entries[:, u]) for u in range(self.cols)]
        return self._supports

    def __eq__(self, other):
        if not isinstance(other, SpreadingMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and bool(
            np.array_equal(self.entries, other.entries)
        )

    def __repr__(self):
        return f"SpreadingMatrix(L={self.rows}, N={self.cols}, w_c={self.col_weight})"

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        """Write ``L N w_c`` then one line of ascending 1-based row indices per column."""
        lines = [f"{self.rows} {self.cols} {self.col_weight}"]
        for rows in self.supports():
            lines.append(" ".join(str(int(r) + 1) for r in rows))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SpreadingMatrix":
        text = Path(path).read_text().split("\n")
        header = text[0].split()
        if len(header) != 3:
            raise ValueError(f"{path}: header must be 'L N w_c'")
        L, N, w_c = (int(v) for v in header)
        a = np.zeros((L, N), dtype=np.uint8)
        body = [ln for ln in text[1:] if ln.strip()]
        if len(body) != N:
            raise ValueError(f"{path}: expected {N} column lines, found {len(body)}")
        for u, ln in enumerate(body):
            idx = [int(v) - 1 for v in ln.split()]
            if len(idx) != w_c or min(idx) < 0 or max(idx) >= L:
                raise ValueError(f"{path}: bad row list for column {u + 1}")
            a[idx, u] = 1
        return cls(a, w_c)


def _check_dims(L: int, N: int, w_c: int) -> None:
    if w_c < 2:
        raise InfeasibleDimensionsError(f"column weight must be >= 2, got {w_c}")
    if w_c >= L:
        raise InfeasibleDimensionsError(f"column weight {w_c} must be below L={L}")
    if L >= N:
        raise InfeasibleDimensionsError(f"need L < N for an overloaded system (L={L}, N={N})")


def validate_regular(S: SpreadingMatrix, w_c: int) -> bool:
    """True iff every column has weight ``w_c`` (>= 2) and rows are balanced to within one."""
    if w_c < 2:
        return False
    if not np.all(S.col_weights == w_c):
        return False
    rw = S.row_weights
    target = S.cols * w_c / S.rows
    return bool(np.all(np.abs(rw - target) <= 1) and rw.max() - rw.min() <= 1)


# -- progressive edge growth -----------------------------------------------


def construct_peg(L: int, N: int, w_c: int, seed: int | None = None) -> SpreadingMatrix:
    """Column-regular matrix by progressive edge growth.

    Each new edge of a column goes to a check node outside the deepest
    reachable level of the column's current tree.  Ties break on lowest
    check degree, then lowest check label.  With ``seed=None`` labels are the
    row indices; an integer seed relabels rows by a seeded permutation first,
    which gives distinct but reproducible matrices per seed.

    Row weights are kept within one of each other by closing a check once it
    reaches its quota.
    """
    _check_dims(L, N, w_c)
    if seed is None:
        label = np.arange(L)
    else:
        label = np.random.default_rng(seed).permutation(L)

    total = N * w_c
    low, n_high = divmod(total, L)
    high_left = n_high  # how many rows may still reach low + 1

    chk_deg = np.zeros(L, dtype=np.int64)
    chk_vars: list[list[int]] = [[] for _ in range(L)]
    var_chks: list[list[int]] = [[] for _ in range(N)]

    def is_open(c: int) -> bool:
        d = chk_deg[c]
        if d < low:
            return True
        return d == low and high_left > 0

    for v in range(N):
        for k in range(w_c):
            open_mask = np.array([is_open(c) for c in range(L)])
            open_mask[var_chks[v]] = False
            if k == 0:
                cand = np.flatnonzero(open_mask)
            else:
                cand = _peg_candidates(v, var_chks, chk_vars, open_mask, L)
            if cand.size == 0:
                # quota left only on checks this column already uses
                free = np.ones(L, dtype=bool)
                free[var_chks[v]] = False
                cand = np.flatnonzero(free)
            degs = chk_deg[cand]
            cand = cand[degs == degs.min()]
            c = int(cand[np.argmin(label[cand])])
            if chk_deg[c] == low:
                high_left -= 1
            chk_deg[c] += 1
            chk_vars[c].append(v)
            var_chks[v].append(c)

    a = np.zeros((L, N), dtype=np.uint8)
    for v, cs in enumerate(var_chks):
        a[cs, v] = 1
    return SpreadingMatrix(a, w_c)


def _peg_candidates(v, var_chks, chk_vars, open_mask, L):
    """Open checks not reached at the deepest level of v's breadth-first tree."""
    reached = np.zeros(L, dtype=bool)
    frontier = list(var_chks[v])
    reached[frontier] = True
    seen_vars = {v}
    while True:
        remaining = open_mask & ~reached
        if not remaining.any():
            break
        prev_remaining = remaining
        nxt = []
        for c in frontier:
            for u in chk_vars[c]:
                if u in seen_vars:
                    continue
                seen_vars.add(u)
                for c2 in var_chks[u]:
                    if not reached[c2]:
                        reached[c2] = True
                        nxt.append(c2)
        if not nxt:
            # tree stopped growing: anything still unreached is at infinite depth
            return np.flatnonzero(remaining)
        frontier = nxt
        new_remaining = open_mask & ~reached
        if not new_remaining.any():
            return np.flatnonzero(prev_remaining)
    # every open check already sits at depth 0 (only possible for tiny matrices)
    return np.flatnonzero(open_mask)


# -- cycle census ----------------------------------------------------------

# Mobius weights of set partitions of {0,1,2,3}: number of tuples with all
# entries distinct = sum over partitions of mu * prod(|intersection of block|).
def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _mobius(partition) -> int:
    w = 1
    for block in partition:
        n = len(block)
        w *= (-1) ** (n - 1) * math.factorial(n - 1)
    return w


_PARTITIONS = {k: [(p, _mobius(p)) for p in _set_partitions(list(range(k)))] for k in (3, 4)}


def _distinct_tuples(sets: list[frozenset]) -> int:
    """Number of tuples (x_0..x_{k-1}), x_i in sets[i], with all x_i distinct."""
    total = 0
    for part, mu in _PARTITIONS[len(sets)]:
        term = mu
        for block in part:
            inter = sets[block[0]]
            for i in block[1:]:
                inter = inter & sets[i]
            term *= len(inter)
            if term == 0:
                break
        total += term
    return total


def cycle_census(S: SpreadingMatrix) -> CycleCensus:
    """Exact number of 4-, 6- and 8-cycles in the Tanner graph of ``S``.

    A 2k-cycle visits k distinct rows in cyclic order, joined by k distinct
    columns, the column between consecutive rows covering both.  Counts come
    from the row-overlap matrix ``S S^T``: pairs of shared columns for
    4-cycles, and an inclusion-exclusion over shared-column sets along every
    row triangle / row quadrilateral of the overlap graph for 6- and 8-cycles.
    """
    a = S.entries.astype(np.int64)
    L = a.shape[0]
    overlap = a @ a.T
    np.fill_diagonal(overlap, 0)

    len4 = int(np.sum(overlap * (overlap - 1) // 2) // 2)

    row_cols = [frozenset(np.flatnonzero(a[i]).tolist()) for i in range(L)]
    nbrs = [set(np.flatnonzero(overlap[i]).tolist()) for i in range(L)]
    shared: dict[tuple[int, int], frozenset] = {}

    def common(i, j):
        key = (i, j) if i < j else (j, i)
        s = shared.get(key)
        if s is None:
            s = row_cols[i] & row_cols[j]
            shared[key] = s
        return s

    len6 = 0
    for i in range(L):
        for j in nbrs[i]:
            if j <= i:
                continue
            for k in nbrs[i] & nbrs[j]:
                if k <= j:
                    continue
                len6 += _distinct_tuples([common(i, j), common(j, k), common(k, i)])

    len8 = 0
    for i in range(L):
        higher = sorted(n for n in nbrs[i] if n > i)
        for j, l in combinations(higher, 2):
            for k in nbrs[j] & nbrs[l]:
                if k <= i:
                    continue
                len8 += _distinct_tuples(
                    [common(i, j), common(j, k), common(k, l), common(l, i)]
                )
    return CycleCensus(len4, len6, len8)


# -- cycle-profile search --------------------------------------------------


class _TannerGraph:
    """Mutable adjacency used by the cycle-profile search."""

    def __init__(self, S: SpreadingMatrix):
        self.L = S.rows
        self.col_rows = [set(s.tolist()) for s in S.supports()]
        self.row_cols = [set(np.flatnonzero(S.entries[r]).tolist()) for r in range(S.rows)]

    def swap(self, u, v, a, b):
        """Column u trades row a for row b, column v trades b for a."""
        self.col_rows[u].remove(a)
        self.col_rows[u].add(b)
        self.col_rows[v].remove(b)
        self.col_rows[v].add(a)
        self.row_cols[a].remove(u)
        self.row_cols[a].add(v)
        self.row_cols[b].remove(v)
        self.row_cols[b].add(u)

    def cycles_through(self, cols) -> np.ndarray:
        """Counts of 4/6/8-cycles that pass through at least one column in ``cols``."""
        counts = np.zeros(3, dtype=np.int64)
        banned: set[int] = set()
        for u in cols:
            counts += self._cycles_from_col(u, banned)
            banned.add(u)
        return counts

    def _cycles_from_col(self, start, banned) -> np.ndarray:
        # every cycle through `start` is walked once per direction
        counts = np.zeros(3, dtype=np.int64)
        path_cols = {start}
        path_rows: set[int] = set()
        col_rows, row_cols = self.col_rows, self.row_cols

        def from_row(r, first_row, depth):
            # depth = number of columns on the path so far
            for c in row_cols[r]:
                if c == start:
                    if r != first_row and depth >= 2:
                        counts[depth - 2] += 1
                    continue
                if c in path_cols or c in banned or depth == 4:
                    continue
                path_cols.add(c)
                for r2 in col_rows[c]:
                    if r2 in path_rows:
                        continue
                    path_rows.add(r2)
                    from_row(r2, first_row, depth + 1)
                    path_rows.discard(r2)
                path_cols.discard(c)

        for r0 in col_rows[start]:
            path_rows.add(r0)
            from_row(r0, r0, 1)
            path_rows.discard(r0)
        return counts // 2

    def to_matrix(self, w_c) -> SpreadingMatrix:
        a = np.zeros((self.L, len(self.col_rows)), dtype=np.uint8)
        for u, rows in enumerate(self.col_rows):
            a[list(rows), u] = 1
        return SpreadingMatrix(a, w_c)


def construct_with_cycle_profile(
    L: int,
    N: int,
    w_c: int,
    target: CycleCensus | list[int] | tuple[int, int, int],
    seed: int | None = None,
    max_attempts: int = 200_000,
    start: SpreadingMatrix | None = None,
) -> SpreadingMatrix:
    """Randomized search for a regular matrix with an exact 4/6/8-cycle census.

    Starts from a PEG matrix and applies degree-preserving double-edge swaps
    (two columns exchange one row each), accepting moves with a
    simulated-annealing rule on the L1 distance between census and target.
    Cycle-count deltas are computed locally around the two swapped columns.
    """
    _check_dims(L, N, w_c)
    if not isinstance(target, CycleCensus):
        target = CycleCensus(*(int(t) for t in target))
    tgt = np.array(target.as_list(), dtype=np.int64)

    # a 4-cycle is a pair of columns sharing two rows; pairs of columns cap the count
    max4 = math.comb(N, 2) * math.comb(w_c, 2) if w_c >= 2 else 0
    if tgt[0] > max4 or np.any(tgt < 0):
        raise UnreachableProfileError(f"target {target.as_list()} exceeds what {L}x{N} allows")

    S0 = start if start is not None else construct_peg(L, N, w_c, seed)
    current = np.array(cycle_census(S0).as_list(), dtype=np.int64)
    if np.array_equal(current, tgt):
        return S0

    rng = np.random.default_rng(seed)
    g = _TannerGraph(S0)
    cost = int(np.abs(current - tgt).sum())
    t_hi, t_lo = 0.5, 0.02
    for step in range(max_attempts):
        temp = t_hi * (t_lo / t_hi) ** (step / max_attempts)
        move = _propose(g, rng, want_more4=current[0] < tgt[0])
        if move is None:
            continue
        u, v, a, b = move
        before = g.cycles_through((u, v))
        g.swap(u, v, a, b)
        after = g.cycles_through((u, v))
        cand = current - before + after
        new_cost = int(np.abs(cand - tgt).sum())
        delta = new_cost - cost
        if delta <= 0 or rng.random() < math.exp(-delta / temp):
            current, cost = cand, new_cost
            if cost == 0:
                S = g.to_matrix(w_c)
                if cycle_census(S).as_list() != target.as_list():  # pragma: no cover
                    raise RuntimeError("local cycle bookkeeping diverged from census")
                return S
        else:
            g.swap(u, v, b, a)
    raise UnreachableProfileError(
        f"no matrix with census {target.as_list()} found in {max_attempts} swaps "
        f"(closest {current.tolist()})"
    )


def _propose(g: _TannerGraph, rng, want_more4: bool):
    """Pick a swap (u, v, a, b): u gives row a to v, v gives row b to u."""
    N = len(g.col_rows)
    if want_more4 and rng.random() < 0.5:
        # steer column x toward duplicating two rows of column u
        u = int(rng.integers(N))
        ru = list(g.col_rows[u])
        shared_row = ru[rng.integers(len(ru))]
        mates = [c for c in g.row_cols[shared_row] if c != u]
        if not mates:
            return None
        x = mates[rng.integers(len(mates))]
        want = [r for r in g.col_rows[u] if r not in g.col_rows[x]]
        drop = [r for r in g.col_rows[x] if r not in g.col_rows[u]]
        if not want or not drop:
            return None
        b = want[rng.integers(len(want))]
        a = drop[rng.integers(len(drop))]
        donors = [c for c in g.row_cols[b] if c not in (u, x) and a not in g.col_rows[c]]
        if not donors:
            return None
        y = donors[rng.integers(len(donors))]
        return x, y, a, b
    u, v = rng.choice(N, size=2, replace=False)
    only_u = [r for r in g.col_rows[u] if r not in g.col_rows[v]]
    only_v = [r for r in g.col_rows[v] if r not in g.col_rows[u]]
    if not only_u or not only_v:
        return None
    a = only_u[rng.integers(len(only_u))]
    b = only_v[rng.integers(len(only_v))]
    return int(u), int(v), a, b
