import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfsim import phy
from gfsim.seqmat import construct_peg

from conftest import random_regular


def test_bpsk_for_first_user():
    a = phy.build_alphabet(0, 2, 123)
    assert np.allclose(a.points, [0, 1, -1])


def test_second_user_rotation():
    a = phy.build_alphabet(1, 2, 800)
    e = np.exp(1j * np.pi / 1600)
    assert np.allclose(a.points, [0, e, -e], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 16), st.integers(1, 500), st.data())
def test_alphabet_unit_energy(M, N, data):
    u = data.draw(st.integers(0, N - 1))
    a = phy.build_alphabet(u, M, N)
    assert a.points.size == M + 1
    assert a.points[0] == 0
    assert np.allclose(np.abs(a.points[1:]), 1.0)
    assert np.allclose(phy.alphabet_table(M, N)[u], a.points)


def test_alphabet_bad_user():
    with pytest.raises(ValueError):
        phy.build_alphabet(5, 2, 5)


def test_snr_mapping():
    assert phy.snr_to_noise_var(0) == 1.0
    assert phy.snr_to_noise_var(10) == pytest.approx(0.1)


def test_spread_packet_example():
    x = np.array([2 + 1j, -3])
    out = phy.spread_packet(x, [1, 1, 0, 0])
    assert np.array_equal(out, [2 + 1j, -3, 2 + 1j, -3, 0, 0, 0, 0])
    assert np.count_nonzero(phy.spread_packet(x, [0, 0, 0, 0])) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(2, 12), st.integers(0, 2**31))
def test_spread_nonzero_count_and_roundtrip(K, L, seed):
    rng = np.random.default_rng(seed)
    x = np.exp(2j * np.pi * rng.random(K))
    s = (rng.random(L) < 0.4).astype(int)
    out = phy.spread_packet(x, s)
    assert np.count_nonzero(out) == s.sum() * K
    for l in np.flatnonzero(s):
        assert np.array_equal(out[l * K:(l + 1) * K], x)


def test_spread_dimension_mismatch():
    with pytest.raises(ValueError):
        phy.spread_packet([], [1, 0])
    with pytest.raises(ValueError):
        phy.superpose_and_add_noise([np.zeros(5)], 2, 3, 0.0)


def test_superpose_trivial_cases():
    f = phy.superpose_and_add_noise([], 3, 4, 0.0)
    assert np.all(f.y == 0)
    p = phy.spread_packet([1, -1, 1j], [0, 1, 1, 0])
    assert np.array_equal(phy.superpose_and_add_noise([p], 3, 4, 0.0).y, p)


def test_noise_power():
    K, L, nv = 60, 400, 0.7
    f = phy.superpose_and_add_noise([], K, L, nv, seed=11)
    n = K * L
    p = np.abs(f.y) ** 2  # exponential with mean nv
    assert abs(p.mean() - nv) < 3 * nv / np.sqrt(n)
    assert abs(np.var(f.y.real) - nv / 2) < 0.05 * nv
    assert abs(np.var(f.y.imag) - nv / 2) < 0.05 * nv


def test_noise_deterministic_per_seed():
    a = phy.superpose_and_add_noise([], 5, 6, 1.0, seed=3).y
    b = phy.superpose_and_add_noise([], 5, 6, 1.0, seed=3).y
    assert np.array_equal(a, b)


def test_subvector_toy(toy):
    # users 0 and 3 active, one symbol each
    alph = phy.alphabet_table(2, 6)
    x = np.zeros(6, dtype=complex)
    x[0], x[3] = alph[0, 1], alph[3, 2]
    f = phy.transmit(toy, [0, 3], [[1], [2]], alph, 0.0)
    a = np.array([1, 0, 0, 1, 0, 0])
    assert np.allclose(f.subvector(0), toy.entries @ np.diag(x) @ a)


def test_subvector_indexing():
    y = np.arange(12).astype(complex)
    f = phy.Frame(y, 3, 4, 0.0)
    assert np.array_equal(f.subvector(1), [1, 4, 7, 10])
    assert np.array_equal(f.subvectors()[2], f.subvector(2))
    with pytest.raises(IndexError):
        f.subvector(3)
    one = phy.Frame(y, 1, 12, 0.0)
    assert np.array_equal(one.subvector(0), y)
    assert np.array_equal(phy.from_subvectors(f.subvectors()).y, y)


def test_frame_length_checked():
    with pytest.raises(ValueError):
        phy.Frame(np.zeros(5), 2, 3, 0.0)


def test_frame_dump_load(tmp_path):
    f = phy.superpose_and_add_noise([], 4, 5, 1.0, seed=0)
    p = tmp_path / "f.bin"
    f.dump(p)
    raw = np.frombuffer(p.read_bytes(), dtype="<f8")
    assert np.array_equal(raw[0::2], f.y.real)
    assert np.array_equal(phy.Frame.load(p, 4, 5, 1.0).y, f.y)


def test_draw_activity_count():
    for lam, N in [(0.1, 200), (0.025, 200), (0.5, 7), (0.0, 10)]:
        a = phy.draw_activity(N, lam, seed=1)
        assert a.size == round(lam * N)
        assert np.unique(a).size == a.size


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_transmit_matches_spread_and_sum(seed):
    rng = np.random.default_rng(seed)
    L, N, K, M = 8, 14, 5, 4
    S = random_regular(L, N, 3, rng)
    alph = phy.alphabet_table(M, N)
    active = np.sort(rng.choice(N, size=4, replace=False))
    idx = rng.integers(1, M + 1, size=(4, K))
    f = phy.transmit(S, active, idx, alph, 0.0)
    packets = [phy.spread_packet(alph[u, idx[i]], S.entries[:, u]) for i, u in enumerate(active)]
    g = phy.superpose_and_add_noise(packets, K, L, 0.0)
    assert np.allclose(f.y, g.y, atol=1e-12)
    # sub-vector form y_k = S X_k a
    a = np.zeros(N)
    a[active] = 1
    for k in range(K):
        x = np.zeros(N, dtype=complex)
        x[active] = alph[active, idx[:, k]]
        assert np.allclose(f.subvector(k), S.entries @ np.diag(x) @ a, atol=1e-12)


def test_transmit_noise_is_added():
    S = construct_peg(10, 20, 2, seed=0)
    alph = phy.alphabet_table(2, 20)
    f0 = phy.transmit(S, [3], [[1, 2]], alph, 0.0)
    f1 = phy.transmit(S, [3], [[1, 2]], alph, 0.5, seed=2)
    assert not np.allclose(f0.y, f1.y)
