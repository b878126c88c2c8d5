"""Sparse Hamiltonians, their particle-hole pieces and the Weyl operator.

Two impurity treatments are supported. ``Static`` fixes the impurity at
``y = 0`` so ``exp(iky) = 1`` and the kinetic term ``h0`` is dropped.
``Truncated`` keeps a finite impurity momentum basis ``|q|^2 <= q_cut^2``;
``exp(iky)`` shifts ``q -> q + k`` and shifts leaving the basis annihilate.
Operators in the truncated picture act on ``impurity (x) fermions`` with the
impurity index slowest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.sparse.linalg import expm_multiply

from .coherent import CoherentParams
from .fock import (
    ExcitationCutoff, FockSpace, Full, PairAlgebra, PairMode,
    build_space, certify, operator, pair_modes, particle_hole,
)
from .lattice import (
    FermiBall, ModeSet, Potential, build_fermi_ball, build_mode_set, gamma_set, lattice_points,
    radius_sq,
)
from .patches import build_patch_set, default_M, diagnostic_patch_set

WEYL_DENSE_MAX = 4000
APPLY_DENSE_MAX = 256


# ------------------------------------------------------------------ impurity

@dataclass(frozen=True)
class Static:
    kind: str = "static"


@dataclass(frozen=True)
class Truncated:
    q_cut: float
    beta: float = 0.0
    kind: str = "truncated"


class ImpurityBasis:
    """Momentum basis ``{q : |q|^2 <= q_cut^2}`` of the impurity."""

    def __init__(self, q_cut: float):
        self.q = lattice_points(radius_sq(q_cut))
        self.index = {tuple(int(x) for x in q): i for i, q in enumerate(self.q)}
        self.dim = len(self.q)

    def shift(self, k) -> sps.csr_matrix:
        """``exp(iky)``: ``|q> -> |q + k>``, zero if ``q + k`` leaves the basis."""
        rows, cols = [], []
        for j, q in enumerate(self.q):
            i = self.index.get((int(q[0]) + k[0], int(q[1]) + k[1], int(q[2]) + k[2]))
            if i is not None:
                rows.append(i)
                cols.append(j)
        return sps.csr_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(self.dim, self.dim))

    def laplacian(self) -> sps.csr_matrix:
        """``-Delta_y`` as the diagonal ``|q|^2``."""
        return sps.diags((self.q * self.q).sum(axis=1).astype(complex), format="csr")

    def plane_wave(self, q0) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[tuple(int(x) for x in q0)]] = 1.0
        return v


def _lift(imp: ImpurityBasis | None, fermion_op, shift_k=None) -> sps.csr_matrix:
    if imp is None:
        return sps.csr_matrix(fermion_op)
    s = sps.identity(imp.dim, dtype=complex, format="csr") if shift_k is None else imp.shift(shift_k)
    return sps.kron(s, fermion_op, format="csr")


# ---------------------------------------------------------------- fermionic pieces

def kinetic(space: FockSpace) -> sps.csr_matrix:
    e = (space.modes.modes ** 2).sum(axis=1).astype(float)
    occ = ((space.basis[:, None] >> np.arange(space.L)) & 1).astype(float)
    return sps.diags((occ @ e).astype(complex), format="csr")


def build_H0(space: FockSpace) -> sps.csr_matrix:
    """``sum e(k) a*_k a_k`` with ``e = +|k|^2`` outside and ``-|k|^2`` inside."""
    e = (space.modes.modes ** 2).sum(axis=1).astype(float)
    e = np.where(space.modes.inside, -e, e)
    occ = ((space.basis[:, None] >> np.arange(space.L)) & 1).astype(float)
    return sps.diags((occ @ e).astype(complex), format="csr")


def e_of(space: FockSpace, p) -> float:
    i = space.mode_index(p)
    e = float(sum(int(x) ** 2 for x in space.modes.modes[i]))
    return -e if space.modes.inside[i] else e


def _hops(modes: ModeSet, k):
    """Index pairs ``(i, j)`` with ``mode_i - mode_j = k`` inside the mode set."""
    index = modes.index()
    out = []
    for i, p in enumerate(modes.modes):
        j = index.get((int(p[0]) - k[0], int(p[1]) - k[1], int(p[2]) - k[2]))
        if j is not None:
            out.append((i, j))
    return out


def dropped_hops(modes: ModeSet, V: Potential) -> list[tuple]:
    """Hops ``q -> q + k`` from ball modes ``q`` that leave the mode set."""
    index = modes.index()
    out = []
    for k in V.support:
        for j, q in enumerate(modes.modes):
            if not modes.inside[j]:
                continue
            p = (int(q[0]) + k[0], int(q[1]) + k[1], int(q[2]) + k[2])
            if p not in index:
                out.append((k, tuple(int(x) for x in q), p))
    return out


def _coupling_terms(modes: ModeSet, V: Potential, lam: float, k, kind: str):
    """Ladder strings of one ``k`` block of the interaction.

    ``kind`` selects the block of ``sum_p a*_p a_{p-k}`` after particle-hole
    conjugation: "all" (untransformed), "pp" (both outside), "hh" (both
    inside, written as ``a_p a*_{p-k}``), "create" (``a*_p a*_{p-k}``, p
    outside and p-k inside) and "annihilate" (``a_{p-k} a_p``, same pairs).
    """
    v = lam * V(k)
    ins = modes.inside
    terms = []
    for i, j in _hops(modes, k):
        if kind == "all":
            terms.append((v, [(i, True), (j, False)]))
        elif kind == "pp" and not ins[i] and not ins[j]:
            terms.append((v, [(i, True), (j, False)]))
        elif kind == "hh" and ins[i] and ins[j]:
            terms.append((v, [(i, False), (j, True)]))
        elif kind == "create" and not ins[i] and ins[j]:
            terms.append((v, [(i, True), (j, True)]))
        elif kind == "annihilate" and not ins[i] and ins[j]:
            terms.append((v, [(j, False), (i, False)]))
    return terms


def _interaction(space: FockSpace, V: Potential, lam: float, kind: str,
                 imp: ImpurityBasis | None, conj_shift: bool = False) -> sps.csr_matrix:
    dim = space.dim * (imp.dim if imp else 1)
    out = sps.csr_matrix((dim, dim), dtype=complex)
    for k in V.support:
        terms = _coupling_terms(space.modes, V, lam, k, kind)
        if not terms:
            continue
        op = operator(space, terms)
        shift = tuple(-x for x in k) if conj_shift else k
        out = out + _lift(imp, op, shift if imp else None)
    return out.tocsr()


def build_micro(space: FockSpace, ball: FermiBall, V: Potential, lam: float,
                imp=None, strict: bool = True) -> sps.csr_matrix:
    """Microscopic Fock Hamiltonian restricted to the space (particle picture).

    With ``strict`` an error is raised if a hop out of an occupied ball mode
    leaves the mode set; otherwise such hops are dropped (see
    :func:`dropped_hops`).
    """
    imp = imp or Static()
    if strict:
        lost = dropped_hops(space.modes, V)
        if lost:
            raise ValueError(f"{len(lost)} hops from ball modes leave the mode set, e.g. {lost[0]}")
    ib = ImpurityBasis(imp.q_cut) if isinstance(imp, Truncated) else None
    H = _lift(ib, kinetic(space)) + _interaction(space, V, lam, "all", ib)
    if ib is not None and imp.beta:
        H = H + imp.beta * sps.kron(ib.laplacian(), sps.identity(space.dim, format="csr"), format="csr")
    return certify(H.tocsr(), "hermitian")


def build_b_dagger(space: FockSpace, V: Potential, lam: float, imp=None) -> sps.csr_matrix:
    """``b*(h~)`` with ``h~(k) = lam V(k) exp(iky)`` summed over the full support."""
    ib = ImpurityBasis(imp.q_cut) if isinstance(imp, Truncated) else None
    return _interaction(space, V, lam, "create", ib)


def build_b(space: FockSpace, V: Potential, lam: float, imp=None) -> sps.csr_matrix:
    ib = ImpurityBasis(imp.q_cut) if isinstance(imp, Truncated) else None
    return _interaction(space, V, lam, "annihilate", ib, conj_shift=True)


def build_nonbosonizable(space: FockSpace, V: Potential, lam: float, imp=None) -> sps.csr_matrix:
    """Hole-hole plus particle-particle terms of the transformed interaction."""
    ib = ImpurityBasis(imp.q_cut) if isinstance(imp, Truncated) else None
    return (_interaction(space, V, lam, "hh", ib) + _interaction(space, V, lam, "pp", ib)).tocsr()


def nonbosonizable_normal_ordered(space: FockSpace, V: Potential, lam: float) -> tuple[sps.csr_matrix, float]:
    """Static-mode E rebuilt with hole-hole terms as ``-a*_{p-k} a_p``.

    Returns the operator and the constant that normal ordering produces,
    which is zero because ``k != 0`` on the support.
    """
    ins = space.modes.inside
    terms = []
    const = 0.0
    for k in V.support:
        v = lam * V(k)
        for i, j in _hops(space.modes, k):
            if ins[i] and ins[j]:
                terms.append((-v, [(j, True), (i, False)]))
                if i == j:
                    const += v
            elif not ins[i] and not ins[j]:
                terms.append((v, [(i, True), (j, False)]))
    return operator(space, terms), const


# ---------------------------------------------------------------- effective pieces

def build_DB(alg: PairAlgebra, kF: float) -> sps.csr_matrix:
    dim = alg.space.dim
    out = sps.csr_matrix((dim, dim), dtype=complex)
    for i, pm in enumerate(alg.modes):
        out = out + pm.eps(kF) * (alg.cd(i) @ alg.c(i))
    return out.tocsr()


def build_Phi(alg: PairAlgebra, h: np.ndarray, imp: ImpurityBasis | None = None) -> sps.csr_matrix:
    """``c*(h) + c(h)``; with an impurity basis each entry carries its shift."""
    if imp is None:
        return (alg.c_dagger_of(h) + alg.c_of(h)).tocsr()
    dim = alg.space.dim * imp.dim
    out = sps.csr_matrix((dim, dim), dtype=complex)
    for i, pm in enumerate(alg.modes):
        out = out + h[i] * _lift(imp, alg.cd(i), pm.k) + np.conj(h[i]) * _lift(imp, alg.c(i), tuple(-x for x in pm.k))
    return out.tocsr()


def coupling_vector(modes_list, V: Potential, lam: float) -> np.ndarray:
    """``h_alpha(k) = lam V(k) n_alpha(k)`` for each pair mode."""
    return np.array([lam * V(pm.k) * pm.n for pm in modes_list], dtype=complex)


def commutator_residual_lin(H0: sps.csr_matrix, alg: PairAlgebra, i: int, kF: float) -> sps.csr_matrix:
    """``E_lin(k)* = [H0, c*] - eps c*``."""
    cd = alg.cd(i)
    return (H0 @ cd - cd @ H0 - alg.modes[i].eps(kF) * cd).tocsr()


def commutator_residual_bos(DB: sps.csr_matrix, alg: PairAlgebra, i: int, kF: float) -> sps.csr_matrix:
    """``E_B(k)* = [D_B, c*] - eps c*``."""
    cd = alg.cd(i)
    return (DB @ cd - cd @ DB - alg.modes[i].eps(kF) * cd).tocsr()


def lin_weight_residual(space: FockSpace, pm: PairMode, kF: float) -> sps.csr_matrix:
    """``E_lin*`` built directly as the weighted pair operator with ``g(p,k)``."""
    w = 1.0 / pm.n
    terms = []
    e = (space.modes.modes ** 2).sum(axis=1).astype(float)
    e = np.where(space.modes.inside, -e, e)
    for p, q in pm.pairs:
        g = e[p] + e[q] - pm.eps(kF)
        terms.append((w * g, [(p, True), (q, True)]))
    return operator(space, terms)


# --------------------------------------------------------------------- Weyl

def weyl(B, dense_max: int = WEYL_DENSE_MAX):
    """``exp(B)`` for anti-hermitian ``B``.

    Returns a dense matrix when ``dim <= dense_max``; otherwise a callable
    that applies ``exp(B)`` to vectors by ``expm_multiply``.
    """
    certify(B, "anti-hermitian", tol=1e-10)
    dim = B.shape[0]
    if dim <= dense_max:
        Bd = B.toarray() if sps.issparse(B) else np.asarray(B)
        return sla.expm(Bd)
    Bs = sps.csr_matrix(B)
    return lambda psi: expm_multiply(Bs, psi)


def apply_weyl(B, psi: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """``exp(sigma B) psi``."""
    if sigma == 0:
        return np.array(psi, dtype=complex)
    if B.shape[0] <= APPLY_DENSE_MAX:
        Bd = B.toarray() if sps.issparse(B) else np.asarray(B)
        return sla.expm(sigma * Bd) @ psi
    return expm_multiply(sigma * sps.csr_matrix(B), psi)


# ------------------------------------------------------------------ desk model

def image_space(space: FockSpace) -> FockSpace:
    """The basis ``{n XOR ball}``: where R sends ``space``."""
    if isinstance(space.sector, Full):
        return space
    basis = np.sort(space.basis ^ np.int64(space.inside_mask))
    basis.setflags(write=False)
    return FockSpace(space.modes, ("ph-image", space.sector), basis)


@dataclass
class DeskModel:
    """A finite-mode instance with everything needed for operator checks.

    ``ph`` is the particle-hole picture space (vacuum = no excitations);
    ``micro`` is its image under R (particle picture). ``M = 1`` selects the
    single whole-sphere diagnostic patch, which puts every ``k`` in one
    patch and so exercises the off-diagonal CCR error.
    """

    kF: float
    V: Potential
    lam: float
    p_cut: float
    M: int
    delta: float
    sector: object
    corridor: float = 0.0
    imp: object = field(default_factory=Static)
    mode_points: list | None = None

    def __post_init__(self):
        from .lattice import mode_subset

        self.ball = build_fermi_ball(self.kF)
        if self.mode_points is not None:
            self.modes = mode_subset(self.ball, self.mode_points)
        else:
            self.modes = build_mode_set(self.ball, self.V, self.p_cut)
        if self.M == 1:
            self.patches = diagnostic_patch_set(self.kF, self.ball.N)
        else:
            self.patches = build_patch_set(self.M, self.kF, self.ball.N, self.delta, self.corridor)
        self.gamma = gamma_set(self.V)
        self.pair_modes = pair_modes(self.modes, self.patches, self.gamma)
        self.ph = build_space(self.modes, self.sector)
        self.micro = image_space(self.ph)
        self.alg = PairAlgebra(self.ph, self.pair_modes)
        self.impb = ImpurityBasis(self.imp.q_cut) if isinstance(self.imp, Truncated) else None
        self._cache: dict = {}

    # --- sizes and bookkeeping
    @property
    def dim(self) -> int:
        return self.ph.dim * (self.impb.dim if self.impb else 1)

    @property
    def eps(self) -> np.ndarray:
        return np.array([pm.eps(self.kF) for pm in self.pair_modes])

    @property
    def h(self) -> np.ndarray:
        return coupling_vector(self.pair_modes, self.V, self.lam)

    def coherent_params(self) -> CoherentParams:
        keys = tuple((pm.k, pm.alpha) for pm in self.pair_modes)
        kvec = np.array([pm.k for pm in self.pair_modes], dtype=np.int64).reshape(-1, 3)
        vhat = np.array([self.V(pm.k) for pm in self.pair_modes], dtype=float)
        n = np.array([pm.n for pm in self.pair_modes], dtype=float)
        return CoherentParams(lam=self.lam, kF=self.kF, EpW=float(self.ball.EpW), V=self.V, keys=keys,
                              kvec=kvec, vhat=vhat, n=n, eps=self.eps)

    def _get(self, name, fn):
        if name not in self._cache:
            self._cache[name] = fn()
        return self._cache[name]

    # --- operators
    @property
    def R(self) -> sps.csr_matrix:
        """R from the ph space into the particle-picture space."""
        return self._get("R", lambda: particle_hole(self.ph, self.micro))

    @property
    def N(self) -> sps.csr_matrix:
        return self._get("N", lambda: _lift(self.impb, self.ph.number_op()))

    def H_micro(self) -> sps.csr_matrix:
        return self._get("Hmicro", lambda: build_micro(self.micro, self.ball, self.V, self.lam, self.imp, strict=False))

    def H_micro_ph(self) -> sps.csr_matrix:
        """``R* H R`` on the ph space."""
        def f():
            R = self.R if self.impb is None else _lift(self.impb, self.R)
            return (R.conj().T @ self.H_micro() @ R).tocsr()
        return self._get("HmicroPH", f)

    def H0(self) -> sps.csr_matrix:
        return self._get("H0", lambda: build_H0(self.ph))

    def h0(self) -> sps.csr_matrix:
        if self.impb is None or not self.imp.beta:
            return sps.csr_matrix((self.dim, self.dim), dtype=complex)
        return self.imp.beta * sps.kron(self.impb.laplacian(), sps.identity(self.ph.dim, format="csr"), format="csr")

    def DB(self) -> sps.csr_matrix:
        return self._get("DB", lambda: build_DB(self.alg, self.kF))

    def Phi(self) -> sps.csr_matrix:
        return self._get("Phi", lambda: build_Phi(self.alg, self.h, self.impb))

    def identity(self) -> sps.csr_matrix:
        return sps.identity(self.dim, dtype=complex, format="csr")

    def H_eff(self) -> sps.csr_matrix:
        def f():
            H = self.h0() + _lift(self.impb, self.DB()) + self.Phi() + self.ball.EpW * self.identity()
            return certify(H.tocsr(), "hermitian")
        return self._get("Heff", f)

    def H_eff_tilde(self) -> sps.csr_matrix:
        return self._get("Hefft", lambda: (self.H_eff() - self.Phi()).tocsr())

    def E_nonbos(self) -> sps.csr_matrix:
        return self._get("E", lambda: build_nonbosonizable(self.ph, self.V, self.lam, self.imp))

    def reconstruction(self) -> sps.csr_matrix:
        """``h0 + H0 + b* + b + E_pw + E`` on the ph space."""
        def f():
            H = (self.h0() + _lift(self.impb, self.H0())
                 + build_b_dagger(self.ph, self.V, self.lam, self.imp)
                 + build_b(self.ph, self.V, self.lam, self.imp)
                 + self.ball.EpW * self.identity() + self.E_nonbos())
            return H.tocsr()
        return self._get("recon", f)

    def vacuum(self, q0=None) -> np.ndarray:
        v = self.ph.vacuum()
        if self.impb is None:
            return v
        q0 = (0, 0, 0) if q0 is None else q0
        return np.kron(self.impb.plane_wave(q0), v)

    def B_of(self, eta: np.ndarray) -> sps.csr_matrix:
        """``c*(eta) - c(eta)`` (static amplitudes)."""
        return _lift(self.impb, self.alg.B(eta))


def desk_kF1(lam: float = 1.0, sector=None, M: int | None = None, **kw) -> DeskModel:
    """kF = 1 with ``|p|^2 <= 2`` (19 modes); default ph sector is the image of N = 7."""
    ball = build_fermi_ball(1.0)
    M = default_M(ball.N) if M is None else M
    sector = ExcitationCutoff(None, True) if sector is None else sector
    return DeskModel(1.0, Potential.ball(1), lam, math.sqrt(2), M, 2.0 / 15.0, sector, **kw)


def desk_kF1_small(lam: float = 1.0, M: int | None = None, **kw) -> DeskModel:
    """Ten-mode Full space at kF = 1: the ball plus three outside modes."""
    ball = build_fermi_ball(1.0)
    M = default_M(ball.N) if M is None else M
    pts = ball.as_tuples() + [(1, 0, 1), (0, 1, 1), (-1, 0, 1)]
    return DeskModel(1.0, Potential.ball(1), lam, math.sqrt(2), M, 2.0 / 15.0, Full(), mode_points=pts, **kw)


def desk_kF2(lam: float = 1.0, m: int = 4, M: int | None = None, **kw) -> DeskModel:
    """kF = sqrt(2) with ``|p|^2 <= 3`` (27 modes) and an excitation cap."""
    ball = build_fermi_ball(math.sqrt(2))
    M = default_M(ball.N) if M is None else M
    return DeskModel(math.sqrt(2), Potential.ball(1), lam, math.sqrt(3), M, 2.0 / 15.0,
                     ExcitationCutoff(m, True), **kw)
