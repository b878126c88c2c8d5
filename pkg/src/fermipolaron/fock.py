"""Finite-mode fermionic Fock space with exact sparse operators.

Basis states are occupation bitstrings stored as int64: bit ``i`` is the
occupation of mode ``i`` of the mode set, which is in lexicographic order.
The Jordan-Wigner convention is

    a*_i |n> = (-1)^{sum_{j<i} n_j} |n + e_i>,

so ``|n> = a*_{i1} a*_{i2} ... a*_{ij} Omega`` with ``i1 < i2 < ... < ij``.

The filled ball is ``Omega_0 = z |ball>`` where ``|ball>`` is the bitstring
state of the ball modes and ``z`` is 1 or i. A real ``Omega_0`` would give
``R^2 = (-1)^{m(m-1)/2}`` for ``m`` ball modes, so ``z = i`` is used when
that sign is negative; then ``R = R* = R^{-1}`` holds exactly.

Everything that depends on a pair-operator normalisation recounts the pairs
inside the finite mode set, so ``c*_alpha(k)`` is exactly normalised there.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sps

from .lattice import ModeSet, Momentum
from .patches import PatchSet, index_set

MAX_MODES_FULL = 28
MAX_DIM = 10 ** 6


# ------------------------------------------------------------------------ sectors

@dataclass(frozen=True)
class Full:
    def describe(self) -> str:
        return "full"


@dataclass(frozen=True)
class FixedParticleNumber:
    n: int

    def describe(self) -> str:
        return f"fixed_n={self.n}"


@dataclass(frozen=True)
class ExcitationCutoff:
    """Particle-hole picture sector.

    ``m`` caps the excitation number (occupied outside modes plus occupied
    inside modes); ``None`` means no cap. ``neutral`` keeps only states with
    equal numbers of particles (outside) and holes (inside), which is the
    image of the fixed-particle-number sector under R.
    """

    m: int | None = None
    neutral: bool = True

    def describe(self) -> str:
        return f"excitations<={self.m},neutral={self.neutral}"


Sector = Full | FixedParticleNumber | ExcitationCutoff


class SpaceTooLarge(ValueError):
    pass


def popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.asarray(x, dtype=np.int64)).astype(np.int64)


def _masks_from_combos(L: int, n: int) -> np.ndarray:
    if n < 0 or n > L:
        return np.zeros(0, dtype=np.int64)
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    combos = np.array(list(itertools.combinations(range(L), n)), dtype=np.int64).reshape(-1, n)
    return np.sum(np.left_shift(np.int64(1), combos), axis=1).astype(np.int64)


def _sector_size(L: int, L_in: int, sector) -> int:
    if isinstance(sector, Full):
        return 2 ** L
    if isinstance(sector, FixedParticleNumber):
        return math.comb(L, sector.n) if 0 <= sector.n <= L else 0
    L_out = L - L_in
    total = 0
    for h in range(L_in + 1):
        for p in range(L_out + 1):
            if sector.neutral and h != p:
                continue
            if sector.m is not None and h + p > sector.m:
                continue
            total += math.comb(L_in, h) * math.comb(L_out, p)
    return total


@dataclass(frozen=True, eq=False)
class FockSpace:
    modes: ModeSet = field(repr=False)
    sector: object
    basis: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return len(self.modes)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def inside_mask(self) -> int:
        return int(sum(1 << i for i, f in enumerate(self.modes.inside) if f))

    def mode_index(self, p) -> int:
        key = tuple(int(x) for x in p)
        idx = self.modes.index().get(key)
        if idx is None:
            raise KeyError(f"momentum {key} is not a mode of this space")
        return idx

    def index_of(self, states: np.ndarray) -> np.ndarray:
        """Basis indices of bitstrings; -1 where a state is not in the basis."""
        states = np.asarray(states, dtype=np.int64)
        pos = np.searchsorted(self.basis, states)
        pos = np.clip(pos, 0, max(self.dim - 1, 0))
        ok = self.basis[pos] == states if self.dim else np.zeros(states.shape, bool)
        return np.where(ok, pos, -1)

    def basis_vector(self, bits: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        i = int(self.index_of(np.array([bits]))[0])
        if i < 0:
            raise KeyError(f"state {bits:b} not in basis")
        v[i] = 1.0
        return v

    def vacuum(self) -> np.ndarray:
        return self.basis_vector(0)

    def filled_ball(self) -> np.ndarray:
        """``Omega_0 = R Omega`` including its phase convention."""
        return ball_phase(self) * self.basis_vector(self.inside_mask)

    def occupation(self) -> np.ndarray:
        return popcount(self.basis)

    def number_op(self) -> sps.csr_matrix:
        return sps.diags(self.occupation().astype(complex), format="csr")

    def random_state(self, rng: np.random.Generator) -> np.ndarray:
        v = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)


def build_space(modes: ModeSet, sector=None, max_dim: int = MAX_DIM) -> FockSpace:
    sector = Full() if sector is None else sector
    L = len(modes)
    if L > 62:
        raise SpaceTooLarge(f"{L} modes do not fit a 64-bit occupation word")
    L_in = int(modes.inside.sum())
    size = _sector_size(L, L_in, sector)
    if isinstance(sector, Full) and L > MAX_MODES_FULL:
        raise SpaceTooLarge(f"full space over {L} modes has dimension 2^{L} = {size}")
    if size > max_dim:
        raise SpaceTooLarge(f"sector {sector.describe()} over {L} modes has dimension {size} > {max_dim}")
    if isinstance(sector, Full):
        basis = np.arange(2 ** L, dtype=np.int64)
    elif isinstance(sector, FixedParticleNumber):
        basis = np.sort(_masks_from_combos(L, sector.n))
    elif isinstance(sector, ExcitationCutoff):
        inside_idx = [i for i in range(L) if modes.inside[i]]
        outside_idx = [i for i in range(L) if not modes.inside[i]]
        parts = []
        for h in range(L_in + 1):
            for p in range(L - L_in + 1):
                if sector.neutral and h != p:
                    continue
                if sector.m is not None and h + p > sector.m:
                    continue
                hm = _remap(_masks_from_combos(L_in, h), inside_idx)
                pm = _remap(_masks_from_combos(L - L_in, p), outside_idx)
                parts.append((hm[:, None] | pm[None, :]).ravel())
        basis = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
    else:
        raise TypeError(f"unknown sector {sector!r}")
    basis.setflags(write=False)
    return FockSpace(modes, sector, basis)


def _remap(masks: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    out = np.zeros_like(masks)
    for j, pos in enumerate(positions):
        out |= ((masks >> j) & 1) << pos
    return out


# --------------------------------------------------------------- ladder strings

Op = tuple[int, bool]  # (mode index, dagger)


def apply_string(states: np.ndarray, ops: Sequence[Op]):
    """Apply ``ops[0] ops[1] ... ops[-1]`` (rightmost first) to bitstrings.

    Returns ``(new_states, signs, ok)``; ``ok`` is False where the product
    annihilates the state.
    """
    st = np.array(states, dtype=np.int64, copy=True)
    sign = np.ones(st.shape, dtype=np.int64)
    ok = np.ones(st.shape, dtype=bool)
    for mode, dag in reversed(ops):
        bit = np.int64(1) << np.int64(mode)
        occ = (st & bit) != 0
        ok &= ~occ if dag else occ
        below = popcount(st & (bit - 1))
        sign *= 1 - 2 * (below & 1)
        st ^= bit
    return st, sign, ok


def operator(src: FockSpace, terms: Iterable[tuple[complex, Sequence[Op]]],
             dst: FockSpace | None = None) -> sps.csr_matrix:
    """Sparse matrix of ``sum coeff * string`` from ``src`` into ``dst``.

    Images outside the destination basis are dropped, so the result is the
    compression of the operator to the two sectors.
    """
    dst = src if dst is None else dst
    rows, cols, vals = [], [], []
    col_all = np.arange(src.dim, dtype=np.int64)
    for coeff, ops in terms:
        if coeff == 0:
            continue
        new, sign, ok = apply_string(src.basis, ops)
        idx = dst.index_of(new)
        keep = ok & (idx >= 0)
        rows.append(idx[keep])
        cols.append(col_all[keep])
        vals.append(coeff * sign[keep].astype(complex))
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0, dtype=complex)
    m = sps.coo_matrix((v, (r, c)), shape=(dst.dim, src.dim)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


def a(space: FockSpace, p, dst: FockSpace | None = None) -> sps.csr_matrix:
    return operator(space, [(1.0, [(space.mode_index(p), False)])], dst)


def a_dagger(space: FockSpace, p, dst: FockSpace | None = None) -> sps.csr_matrix:
    return operator(space, [(1.0, [(space.mode_index(p), True)])], dst)


def anticommutator(x, y):
    return x @ y + y @ x


def commutator(x, y):
    return x @ y - y @ x


def max_abs(m) -> float:
    if sps.issparse(m):
        return float(np.abs(m.data).max()) if m.nnz else 0.0
    return float(np.abs(m).max()) if np.size(m) else 0.0


def certify(m, kind: str = "hermitian", tol: float = 1e-12):
    """Raise unless ``m`` is hermitian (or anti-hermitian) to ``tol``."""
    d = m - m.conj().T if kind == "hermitian" else m + m.conj().T
    err = max_abs(d)
    if err > tol:
        raise ValueError(f"operator is not {kind}: defect {err:.3e}")
    return m


# ------------------------------------------------------------- particle-hole map

def _ph_images(src: FockSpace, states: np.ndarray):
    """Images ``n XOR ball`` and signs of ``T_{i1} ... T_{ij} |ball>``."""
    state = np.full(len(states), src.inside_mask, dtype=np.int64)
    sign = np.ones(len(states), dtype=np.int64)
    for i in reversed(range(src.L)):
        sel = ((states >> i) & 1) == 1
        if not sel.any():
            continue
        bit = np.int64(1) << np.int64(i)
        below = popcount(state[sel] & (bit - 1))
        sign[sel] *= 1 - 2 * (below & 1)
        state[sel] ^= bit
    return state, sign


def ball_phase(src: FockSpace) -> complex:
    """Phase ``z`` of ``Omega_0 = z |ball>`` that makes ``R^2 = 1``.

    With a real filled-ball vector, ``R^2 = (-1)^{m(m-1)/2}`` for ``m`` ball
    modes; the phase ``i`` removes that sign when it is negative.
    """
    _, s = _ph_images(src, np.array([src.inside_mask], dtype=np.int64))
    return 1.0 if s[0] == 1 else 1j


def particle_hole(src: FockSpace, dst: FockSpace | None = None) -> sps.csr_matrix:
    """Matrix of R from ``src`` into ``dst`` (default: same space).

    ``R |n> = T_{i1} ... T_{ij} Omega_0`` with ``T_i = a_i`` inside the ball
    and ``a*_i`` outside; the image bitstring is ``n XOR ball``. The phase of
    ``Omega_0`` is fixed by :func:`ball_phase`.
    """
    dst = src if dst is None else dst
    state, sign = _ph_images(src, src.basis)
    vals = ball_phase(src) * sign.astype(complex)
    idx = dst.index_of(state)
    keep = idx >= 0
    mat = sps.coo_matrix((vals[keep], (idx[keep], np.nonzero(keep)[0])), shape=(dst.dim, src.dim))
    return mat.tocsr()


# ----------------------------------------------------------------- pair operators

@dataclass(frozen=True)
class PairMode:
    """One almost-bosonic mode ``(k, alpha)`` restricted to a finite mode set."""

    k: Momentum
    alpha: int
    hemisphere: str
    pairs: tuple  # ((p_index, q_index), ...) with q = p - k'
    dot: float  # |k . omega_alpha|

    @property
    def count_sq(self) -> int:
        return len(self.pairs)

    @property
    def n(self) -> float:
        return math.sqrt(len(self.pairs))

    def eps(self, kF: float) -> float:
        return 2.0 * kF * self.dot


def pair_modes(modes: ModeSet, ps: PatchSet, gamma: Iterable) -> list[PairMode]:
    """All ``(k, alpha)`` with at least one pair inside the mode set.

    Pair membership follows the patch labels of ``ps``; the counts are
    taken within ``modes``.
    """
    pts = modes.modes
    labels = ps.label(pts)
    inside = modes.inside
    index = modes.index()
    out = []
    centers = ps.centers
    for k in gamma:
        k = tuple(int(x) for x in k)
        iset = index_set(ps, k)
        for hemi, alphas, shift in (("north", iset.north, k), ("south", iset.south, tuple(-x for x in k))):
            for alpha in alphas:
                pairs = []
                for i, p in enumerate(pts):
                    if inside[i] or labels[i] != alpha:
                        continue
                    q = (int(p[0]) - shift[0], int(p[1]) - shift[1], int(p[2]) - shift[2])
                    j = index.get(q)
                    if j is None or not inside[j] or labels[j] != alpha:
                        continue
                    pairs.append((i, j))
                if pairs:
                    dot = abs(float(np.dot(centers[alpha], k)))
                    out.append(PairMode(k, int(alpha), hemi, tuple(pairs), dot))
    return out


def c_dagger_op(space: FockSpace, pm: PairMode) -> sps.csr_matrix:
    if not pm.pairs:
        raise ValueError(f"pair mode {pm.k}, {pm.alpha} has zero count")
    w = 1.0 / pm.n
    return operator(space, [(w, [(p, True), (q, True)]) for p, q in pm.pairs])


def c_op(space: FockSpace, pm: PairMode) -> sps.csr_matrix:
    return c_dagger_op(space, pm).conj().T.tocsr()


@dataclass
class PairAlgebra:
    """Cached pair operators on one space."""

    space: FockSpace
    modes: list

    def __post_init__(self):
        self._cd = [c_dagger_op(self.space, pm) for pm in self.modes]
        self._c = [m.conj().T.tocsr() for m in self._cd]

    def cd(self, i: int) -> sps.csr_matrix:
        return self._cd[i]

    def c(self, i: int) -> sps.csr_matrix:
        return self._c[i]

    def __len__(self):
        return len(self.modes)

    def c_dagger_of(self, eta: np.ndarray) -> sps.csr_matrix:
        """``c*(eta) = sum eta_j c*_j``."""
        out = sps.csr_matrix((self.space.dim, self.space.dim), dtype=complex)
        for e, m in zip(eta, self._cd):
            if e != 0:
                out = out + e * m
        return out

    def c_of(self, eta: np.ndarray) -> sps.csr_matrix:
        """``c(eta) = sum conj(eta_j) c_j``."""
        out = sps.csr_matrix((self.space.dim, self.space.dim), dtype=complex)
        for e, m in zip(eta, self._c):
            if e != 0:
                out = out + np.conj(e) * m
        return out

    def B(self, eta: np.ndarray) -> sps.csr_matrix:
        return (self.c_dagger_of(eta) - self.c_of(eta)).tocsr()

    def ccr_error(self, i: int, j: int) -> sps.csr_matrix:
        """``E_alpha(k, k')`` for modes ``i``, ``j`` sharing the same patch."""
        mi, mj = self.modes[i], self.modes[j]
        if mi.alpha != mj.alpha:
            raise ValueError("the CCR error is defined for a common patch index")
        comm = (self._c[i] @ self._cd[j] - self._cd[j] @ self._c[i]).tocsr()
        if i == j:
            comm = comm - sps.identity(self.space.dim, dtype=complex, format="csr")
        return comm.tocsr()

    def X(self, eta: np.ndarray) -> sps.csr_matrix:
        """``sum conj(eta_i) eta_j E(k_i, k_j)`` over pairs sharing a patch."""
        out = sps.csr_matrix((self.space.dim, self.space.dim), dtype=complex)
        for i, mi in enumerate(self.modes):
            for j, mj in enumerate(self.modes):
                if mi.alpha == mj.alpha and eta[i] != 0 and eta[j] != 0:
                    out = out + np.conj(eta[i]) * eta[j] * self.ccr_error(i, j)
        return out.tocsr()


# ----------------------------------------------------------------- bosonic oracle

@dataclass
class BosonicOracle:
    """Exact bosonic ladder operators on a truncated product space.

    Mode ``j`` has occupations ``0..n_max``; ``N_fermion`` is twice the
    boson number so that it matches the fermionic excitation count.
    """

    eps: np.ndarray
    h: np.ndarray
    n_max: int

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        self.h = np.asarray(self.h, dtype=complex)
        n_modes = len(self.eps)
        size = (self.n_max + 1) ** n_modes
        if size > MAX_DIM:
            raise SpaceTooLarge(f"bosonic oracle dimension {size} > {MAX_DIM}")
        self.dim = size
        single = sps.diags(np.sqrt(np.arange(1, self.n_max + 1, dtype=float)), 1, format="csr")
        eye = sps.identity(self.n_max + 1, format="csr")
        self._c = []
        for j in range(n_modes):
            m = sps.identity(1, format="csr")
            for i in range(n_modes):
                m = sps.kron(m, single if i == j else eye, format="csr")
            self._c.append(m.astype(complex).tocsr())
        occ = np.zeros(size, dtype=np.int64)
        self._occ = []
        for j in range(n_modes):
            o = (np.arange(size) // (self.n_max + 1) ** (n_modes - 1 - j)) % (self.n_max + 1)
            self._occ.append(o)
            occ += o
        self.boson_number = occ

    def __len__(self):
        return len(self.eps)

    def c(self, j: int) -> sps.csr_matrix:
        return self._c[j]

    def cd(self, j: int) -> sps.csr_matrix:
        return self._c[j].conj().T.tocsr()

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    @property
    def N_fermion(self) -> sps.csr_matrix:
        return sps.diags(2.0 * self.boson_number.astype(complex), format="csr")

    def B(self, eta: np.ndarray) -> sps.csr_matrix:
        out = sps.csr_matrix((self.dim, self.dim), dtype=complex)
        for j, e in enumerate(eta):
            out = out + e * self.cd(j) - np.conj(e) * self.c(j)
        return out.tocsr()

    def H_eff(self, E0: float = 0.0) -> sps.csr_matrix:
        out = sps.diags(np.full(self.dim, E0, dtype=complex), format="csr")
        for j in range(len(self)):
            out = out + self.eps[j] * (self.cd(j) @ self.c(j))
            out = out + self.h[j] * self.cd(j) + np.conj(self.h[j]) * self.c(j)
        return out.tocsr()

    def tail_mass(self, psi: np.ndarray) -> float:
        """Probability weight on states where some mode sits at ``n_max``."""
        edge = np.zeros(self.dim, dtype=bool)
        for o in self._occ:
            edge |= o == self.n_max
        return float(np.sum(np.abs(psi[edge]) ** 2))


def build_bosonic_oracle(eps, h, n_max: int) -> BosonicOracle:
    return BosonicOracle(np.asarray(eps), np.asarray(h), int(n_max))
