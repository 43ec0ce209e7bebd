"""Transmitter side and AWGN channel.

Every active user repeats its K-symbol packet on the slots marked in its
protocol sequence; the base station receives the sample-wise sum plus
circularly-symmetric complex Gaussian noise.  Sample ``k`` of slot ``l``
sits at flat index ``k + K*l`` (0-based).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class UserAlphabet:
    user: int
    M: int
    points: np.ndarray  # points[0] is the zero symbol


def user_rotation(u: int, M: int, N: int) -> float:
    """Phase offset of user ``u`` (0-based): evenly spaced over one PSK sector."""
    return np.pi * u / (M * N)


def build_alphabet(u: int, M: int, N: int) -> UserAlphabet:
    if not 0 <= u < N:
        raise ValueError(f"user index {u} outside 0..{N - 1}")
    pts = np.zeros(M + 1, dtype=complex)
    pts[1:] = np.exp(1j * (2 * np.pi * np.arange(M) / M + user_rotation(u, M, N)))
    pts.setflags(write=False)
    return UserAlphabet(u, M, pts)


def alphabet_table(M: int, N: int) -> np.ndarray:
    """(N, M+1) array; row ``u`` holds the alphabet of user ``u``."""
    theta = np.pi * np.arange(N) / (M * N)
    tab = np.zeros((N, M + 1), dtype=complex)
    tab[:, 1:] = np.exp(1j * (2 * np.pi * np.arange(M)[None, :] / M + theta[:, None]))
    return tab


def snr_to_noise_var(snr_db: float) -> float:
    """Noise variance for unit-energy symbols at the given Es/N0 in dB."""
    return 10.0 ** (-snr_db / 10.0)


@dataclass
class Frame:
    y: np.ndarray
    K: int
    L: int
    noise_var: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex)
        if self.y.shape != (self.K * self.L,):
            raise ValueError(f"frame length {self.y.shape} does not match K*L={self.K * self.L}")

    def subvectors(self) -> np.ndarray:
        """(K, L) array whose row k is the k-th symbol sampled in every slot."""
        return self.y.reshape(self.L, self.K).T

    def subvector(self, k: int) -> np.ndarray:
        if not 0 <= k < self.K:
            raise IndexError(f"symbol index {k} outside 0..{self.K - 1}")
        return self.y[k :: self.K].copy()

    def slot_energy(self) -> np.ndarray:
        return np.sum(np.abs(self.y.reshape(self.L, self.K)) ** 2, axis=1)

    def dump(self, path) -> None:
        """Raw little-endian float64 pairs (real, imag)."""
        Path(path).write_bytes(self.y.astype("<c16").tobytes())

    @classmethod
    def load(cls, path, K: int, L: int, noise_var: float) -> "Frame":
        y = np.frombuffer(Path(path).read_bytes(), dtype="<c16")
        return cls(y.astype(complex), K, L, noise_var)


def from_subvectors(Y: np.ndarray, noise_var: float = 0.0) -> Frame:
    """Inverse of :meth:`Frame.subvectors`."""
    Y = np.asarray(Y)
    K, L = Y.shape
    return Frame(Y.T.reshape(-1), K, L, noise_var)


def spread_packet(x, s) -> np.ndarray:
    x = np.asarray(x, dtype=complex).ravel()
    s = np.asarray(s).ravel()
    if x.size == 0 or s.size == 0:
        raise ValueError("dimension mismatch: empty packet or sequence")
    return np.kron(s, x)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def complex_noise(shape, noise_var: float, seed=None) -> np.ndarray:
    rng = _rng(seed)
    sd = np.sqrt(noise_var / 2.0)
    return sd * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def superpose_and_add_noise(packets, K: int, L: int, noise_var: float, seed=None) -> Frame:
    y = np.zeros(K * L, dtype=complex)
    for p in packets:
        p = np.asarray(p)
        if p.shape != y.shape:
            raise ValueError(f"packet length {p.shape} does not match K*L={K * L}")
        y += p
    if noise_var > 0:
        y += complex_noise(y.shape, noise_var, seed)
    return Frame(y, K, L, noise_var)


def draw_activity(N: int, lam: float, seed=None) -> np.ndarray:
    """Sorted indices of exactly round(lam * N) active users, drawn without replacement."""
    rng = _rng(seed)
    n = int(round(lam * N))
    return np.sort(rng.choice(N, size=n, replace=False))


def transmit(S, active, symbol_idx, alphabets: np.ndarray, noise_var: float, seed=None) -> Frame:
    """Received frame for ``active`` users sending ``symbol_idx`` (shape (len(active), K)).

    Equivalent to spreading every packet and superposing, computed through
    the sub-vector form y_k = S X_k a + n_k.
    """
    entries = S.entries if hasattr(S, "entries") else np.asarray(S)
    L = entries.shape[0]
    active = np.asarray(active, dtype=np.int64)
    symbol_idx = np.asarray(symbol_idx, dtype=np.int64)
    K = symbol_idx.shape[1]
    if active.size:
        x = alphabets[active[:, None], symbol_idx]  # (Na, K)
        Y = x.T @ entries[:, active].T.astype(float)  # (K, L)
    else:
        Y = np.zeros((K, L), dtype=complex)
    y = Y.T.reshape(-1).astype(complex)
    if noise_var > 0:
        y = y + complex_noise(y.shape, noise_var, seed)
    return Frame(y, K, L, noise_var)
