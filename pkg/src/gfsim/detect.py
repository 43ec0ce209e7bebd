"""Two-stage iterative receiver.

Stage one estimates slot loads, runs the cover decoder and refines user
activity by belief propagation on binary activity variables.  Stage two runs
a message passing algorithm (MPA) over each user's alphabet extended by the
zero symbol.  Zero-symbol posteriors feed back as activity priors, users
whose activity LLR turns negative are pruned and the factor graph shrinks.

Shapes used below: ``K`` symbols per packet, ``V`` candidate users, ``C``
checks (loaded slots), ``E`` edges, ``Q = M + 1`` symbol hypotheses.
Symbol posteriors are arrays of shape (K, Q, V).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

LLR_MAX = 50.0
NOISE_FLOOR = 1e-12
_TINY = 1e-300


class DegenerateNoiseError(ValueError):
    """Noise variance of zero leaves the Gaussian likelihood undefined."""


def energy_threshold(K: int, noise_var: float, factor: float = 1.55) -> float:
    return factor * K * max(noise_var, NOISE_FLOOR)


def energy_detect(frame, threshold: float) -> np.ndarray:
    """Boolean load state: slot energy at or above ``threshold``."""
    if threshold < 0:
        raise ValueError("energy threshold must be non-negative")
    return frame.slot_energy() >= threshold


def oracle_load_state(S, active) -> np.ndarray:
    """Boolean OR of the active users' protocol sequences."""
    return S.entries[:, np.asarray(active, dtype=np.int64)].any(axis=1)


def cover_decode(S, load) -> np.ndarray:
    """Users none of whose slots is unloaded (sorted indices)."""
    empty = ~np.asarray(load, dtype=bool)
    hits_empty = empty.astype(np.int64) @ S.entries
    return np.flatnonzero(hits_empty == 0)


class FactorGraph:
    """Bipartite graph between loaded slots and candidate users.

    Edges are stored flat (``edge_check``, ``edge_var`` hold positions into
    ``checks`` and ``vars``), sorted by check.  Checks are additionally
    grouped by degree so message updates vectorize across equal-degree checks.
    """

    def __init__(self, checks, vars, edge_check, edge_var):
        self.checks = np.asarray(checks, dtype=np.int64)
        self.vars = np.asarray(vars, dtype=np.int64)
        self.edge_check = np.asarray(edge_check, dtype=np.int64)
        self.edge_var = np.asarray(edge_var, dtype=np.int64)
        C, V = self.num_checks, self.num_vars
        self.check_degree = np.bincount(self.edge_check, minlength=C)
        self.var_degree = np.bincount(self.edge_var, minlength=V)

        starts = np.concatenate([[0], np.cumsum(self.check_degree)])
        self.groups: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for d in np.unique(self.check_degree):
            if d == 0:
                continue
            cpos = np.flatnonzero(self.check_degree == d)
            eidx = starts[cpos][:, None] + np.arange(d)[None, :]
            self.groups[int(d)] = (cpos, eidx)

        # var -> edges, padded with the dummy index E
        maxdeg = int(self.var_degree.max()) if V else 0
        pad = np.full((V, max(maxdeg, 1)), self.num_edges, dtype=np.int64)
        order = np.argsort(self.edge_var, kind="stable")
        fill = np.zeros(V, dtype=np.int64)
        for e in order:
            v = self.edge_var[e]
            pad[v, fill[v]] = e
            fill[v] += 1
        self.var_edges = pad

    @property
    def num_checks(self) -> int:
        return self.checks.size

    @property
    def num_vars(self) -> int:
        return self.vars.size

    @property
    def num_edges(self) -> int:
        return self.edge_check.size

    def neighbors_of_check(self, c: int) -> np.ndarray:
        return self.vars[self.edge_var[self.edge_check == c]]

    def mpa_cost(self, M: int) -> float:
        """sum over checks of (M+1)^degree: likelihood terms per symbol and iteration."""
        return float(np.sum((M + 1.0) ** self.check_degree))

    def __repr__(self):
        return f"FactorGraph(checks={self.num_checks}, vars={self.num_vars}, edges={self.num_edges})"


def build_factor_graph(S, load, candidates) -> FactorGraph:
    """Restrict S to candidate columns and loaded rows, dropping empty rows."""
    candidates = np.asarray(candidates, dtype=np.int64)
    sub = S.entries[:, candidates]
    keep = np.asarray(load, dtype=bool) & sub.any(axis=1)
    checks = np.flatnonzero(keep)
    ec, ev = np.nonzero(sub[checks])
    return FactorGraph(checks, candidates, ec, ev)


def row_degrees(S, candidates) -> np.ndarray:
    """Degree of every row of S[:, candidates], zero rows included."""
    return S.entries[:, np.asarray(candidates, dtype=np.int64)].sum(axis=1)


# -- activity belief propagation -------------------------------------------


def bp_activity(graph: FactorGraph, prior_llr, iterations: int) -> np.ndarray:
    """Posterior activity LLRs log P(a=1)/P(a=0) for every graph variable.

    A loaded check tells variable v: either v is active, or some other
    neighbour is.  The check-to-variable LLR is therefore
    -log(1 - prod_{v' != v} P(a_v' = 0)); a degree-one check pins its
    variable to +LLR_MAX.
    """
    prior = np.clip(np.asarray(prior_llr, dtype=float), -LLR_MAX, LLR_MAX)
    C, V = graph.num_checks, graph.num_vars
    ec, ev = graph.edge_check, graph.edge_var
    v2c = prior[ev]
    c2v = np.zeros_like(v2c)
    for _ in range(iterations):
        log_silent = -np.logaddexp(0.0, v2c)
        per_check = np.bincount(ec, weights=log_silent, minlength=C)
        others_silent = np.minimum(per_check[ec] - log_silent, 0.0)
        with np.errstate(divide="ignore"):
            c2v = -np.log(-np.expm1(others_silent))
        c2v = np.clip(c2v, -LLR_MAX, LLR_MAX)
        per_var = np.bincount(ev, weights=c2v, minlength=V)
        v2c = np.clip(prior[ev] + per_var[ev] - c2v, -LLR_MAX, LLR_MAX)
    per_var = np.bincount(ev, weights=c2v, minlength=V)
    return np.clip(prior + per_var, -LLR_MAX, LLR_MAX)


# -- symbol message passing -------------------------------------------------


def _normalize(p, axis=-1):
    s = p.sum(axis=axis, keepdims=True)
    bad = ~(s > 0)
    if np.any(bad):
        p = np.where(bad, 1.0, p)
        s = p.sum(axis=axis, keepdims=True)
    return p / s


def mpa_init_from_bp(l_bp, M: int) -> np.ndarray:
    """(V, M+1) initial variable messages from activity LLRs."""
    l_bp = np.asarray(l_bp, dtype=float)
    p0 = expit(-l_bp)
    out = np.empty(l_bp.shape + (M + 1,))
    out[..., 0] = p0
    out[..., 1:] = ((1.0 - p0) / M)[..., None]
    return out


def _check_update(graph, Yc, pts, v2c, noise_var):
    """All check-to-variable messages, shape (E, K, Q)."""
    E, K, Q = v2c.shape
    c2v = np.empty_like(v2c)
    for d, (cpos, eidx) in graph.groups.items():
        n = cpos.size
        y = Yc[:, cpos].T  # (n, K)
        p = pts[graph.edge_var[eidx]]  # (n, d, Q)
        sig = np.zeros((n,) + (Q,) * d, dtype=complex)
        for j in range(d):
            shape = [n] + [1] * d
            shape[1 + j] = Q
            sig = sig + p[:, j].reshape(shape)
        diff = y.reshape((n, K) + (1,) * d) - sig[:, None]
        loglik = -(diff.real**2 + diff.imag**2) / (2.0 * noise_var)
        loglik -= loglik.reshape(n, K, -1).max(axis=2).reshape((n, K) + (1,) * d)
        lik = np.exp(loglik)
        axes = list(range(2, 2 + d))
        msgs = [v2c[eidx[:, j]] for j in range(d)]  # each (n, K, Q)
        for j in range(d):
            ops = [lik, [0, 1] + axes]
            for jj in range(d):
                if jj != j:
                    ops += [msgs[jj], [0, 1, 2 + jj]]
            out = np.einsum(*ops, [0, 1, 2 + j], optimize=d > 2)
            c2v[eidx[:, j]] = _normalize(out)
    return c2v


def _var_log_totals(graph, c2v):
    E, K, Q = c2v.shape
    logc = np.log(np.maximum(c2v, _TINY))
    padded = np.concatenate([logc, np.zeros((1, K, Q))], axis=0)
    return logc, padded[graph.var_edges].sum(axis=1)  # (V, K, Q)


def _from_log(x):
    return _normalize(np.exp(x - x.max(axis=-1, keepdims=True)))


def mpa_decode(graph: FactorGraph, Y, noise_var: float, alphabets, init=None,
               iterations: int = 5, history: list | None = None) -> np.ndarray:
    """Symbol posteriors on ``graph`` for every sub-vector in ``Y``.

    ``Y`` is (K, L) (or a single length-L sub-vector), ``alphabets`` the
    (N, M+1) table of user constellations.  ``init`` holds the initial
    variable-to-check messages, (V, M+1) or (V, K, M+1); uniform if omitted.
    Returns posteriors of shape (K, M+1, V), or (M+1, V) for a single
    sub-vector.  If ``history`` is a list, the posterior after every
    iteration is appended to it.
    """
    if not noise_var > 0:
        raise DegenerateNoiseError("noise variance must be positive; use NOISE_FLOOR")
    Y = np.asarray(Y)
    single = Y.ndim == 1
    if single:
        Y = Y[None, :]
    K = Y.shape[0]
    alphabets = np.asarray(alphabets)
    Q = alphabets.shape[1]
    V = graph.num_vars
    pts = alphabets[graph.vars]  # (V, Q)
    Yc = Y[:, graph.checks]

    if init is None:
        base = np.full((V, K, Q), 1.0 / Q)
    else:
        init = np.asarray(init, dtype=float)
        base = np.broadcast_to(init[:, None, :] if init.ndim == 2 else init, (V, K, Q))
    v2c = _normalize(np.array(base[graph.edge_var]))
    for _ in range(iterations):
        c2v = _check_update(graph, Yc, pts, v2c, noise_var)
        logc, tot = _var_log_totals(graph, c2v)
        v2c = _from_log(tot[graph.edge_var] - logc)
        post = _from_log(tot)
        if history is not None:
            history.append(post.transpose(1, 2, 0))
    if iterations == 0:
        post = _normalize(np.array(base))
    out = post.transpose(1, 2, 0)  # (K, Q, V)
    return out[0] if single else out


def activity_llr_from_mpa(posteriors) -> np.ndarray:
    """Activity LLR from the zero-symbol probability averaged over symbols."""
    post = np.asarray(posteriors)
    if post.ndim == 2:
        post = post[None]
    p0 = post[:, 0, :].mean(axis=0)
    with np.errstate(divide="ignore"):
        llr = np.log1p(-p0) - np.log(p0)
    return np.clip(llr, -LLR_MAX, LLR_MAX)


def hard_decision(posterior, alphabets=None, vars=None):
    """Most probable symbol index per variable (ties go to the lowest index).

    Returns the index array, plus the mapped constellation points when
    ``alphabets`` (the (N, M+1) table) and ``vars`` are given.
    """
    idx = np.argmax(np.asarray(posterior), axis=-2)
    if alphabets is None:
        return idx
    pts = np.asarray(alphabets)[np.asarray(vars, dtype=np.int64)]  # (V, Q)
    return idx, pts[np.arange(pts.shape[0]), idx]


# -- Algorithm driver --------------------------------------------------------


@dataclass
class DetectionResult:
    active: np.ndarray  # estimated active users, sorted
    symbol_idx: np.ndarray  # (K, len(active)) alphabet indices, 0 = zero symbol
    symbols: np.ndarray  # (K, len(active)) constellation points
    load: np.ndarray
    initial: np.ndarray  # cover-decoder output
    trace: list = field(default_factory=list)
    ops: float = 0.0


def two_stage_detect(frame, S, noise_var: float, alphabets, t_mpa: int = 5, t_bp: int = 5,
                     t_outer: int = 3, load_state=None, threshold_factor: float = 1.55,
                     feedback: bool = True) -> DetectionResult:
    """Joint activity and payload detection.

    ``load_state=None`` estimates slot loads with the energy detector;
    passing a load vector (e.g. :func:`oracle_load_state`) bypasses it.
    With ``feedback=False`` the receiver stops after one MPA pass on the
    cover-decoder graph: no activity BP, no pruning.
    """
    K = frame.K
    M = np.asarray(alphabets).shape[1] - 1
    nv = max(float(noise_var), NOISE_FLOOR)
    if load_state is None:
        load = energy_detect(frame, energy_threshold(K, nv, threshold_factor))
    else:
        load = np.asarray(load_state, dtype=bool)
    initial = cover_decode(S, load)
    graph = build_factor_graph(S, load, initial)
    Y = frame.subvectors()

    trace = []
    ops = 0.0
    init = None
    post = np.zeros((K, M + 1, 0))
    rounds = t_outer + 1 if feedback else 1
    for t in range(rounds):
        if graph.num_vars == 0:
            post = np.zeros((K, M + 1, 0))
            break
        post = mpa_decode(graph, Y, nv, alphabets, init, t_mpa)
        ops += K * t_mpa * graph.mpa_cost(M)
        if not feedback:
            trace.append({"t": t, "vars": graph.vars, "checks": graph.num_checks, "pruned": 0})
            break
        l_mpa = activity_llr_from_mpa(post)
        l_bp = bp_activity(graph, l_mpa, t_bp)
        keep = l_bp >= 0
        trace.append({"t": t, "vars": graph.vars, "checks": graph.num_checks,
                      "pruned": int((~keep).sum())})
        post = post[:, :, keep]
        init = mpa_init_from_bp(l_bp[keep], M)
        graph = build_factor_graph(S, load, graph.vars[keep])

    active = graph.vars
    idx, sym = hard_decision(post, alphabets, active)
    return DetectionResult(active, idx, sym, load, initial, trace, ops)
