import itertools

import numpy as np
import pytest

from gfsim.seqmat import SpreadingMatrix

# 4 slots, 6 users, column weight 2; user 0 uses slots {0, 1}.
TOY_SUPPORTS = [[0, 1], [0, 2], [2, 3], [0, 3], [1, 3], [1, 2]]


def toy_matrix() -> SpreadingMatrix:
    a = np.zeros((4, 6), dtype=np.uint8)
    for u, rows in enumerate(TOY_SUPPORTS):
        a[rows, u] = 1
    return SpreadingMatrix(a, 2)


@pytest.fixture
def toy():
    return toy_matrix()


def brute_force_cycles(entries, length):
    """Count simple cycles of the given length in the bipartite graph of ``entries``.

    A cycle visits rows r_1..r_k and distinct columns c_1..c_k with c_i
    joining r_i and r_{i+1}.  Every cycle is generated 2k times (k starting
    rows, two directions).
    """
    H = np.asarray(entries, dtype=bool)
    L = H.shape[0]
    k = length // 2
    total = 0
    for rows in itertools.permutations(range(L), k):
        choices = [np.flatnonzero(H[rows[i]] & H[rows[(i + 1) % k]]) for i in range(k)]
        for cols in itertools.product(*choices):
            if len(set(cols)) == k:
                total += 1
    return total // (2 * k)


def random_regular(L, N, w_c, rng):
    a = np.zeros((L, N), dtype=np.uint8)
    for u in range(N):
        a[rng.choice(L, size=w_c, replace=False), u] = 1
    return SpreadingMatrix(a, w_c)
