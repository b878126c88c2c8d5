"""Time propagation and the residual reports built on it.

Small problems (``dim <= DENSE_MAX``) are propagated exactly through a
cached eigendecomposition. Larger ones use a Lanczos exponential with
adaptive substeps; each substep is accepted when the standard a-posteriori
error estimate falls below the local tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sps

from .coherent import CoherentParams, eta_values, format_csv, phase_P
from .fock import BosonicOracle, build_bosonic_oracle, certify
from .hamiltonians import DeskModel, Truncated, apply_weyl, _lift
from .lowerbound import corollary_floor, d_of, make_floor_params

log = logging.getLogger(__name__)

DENSE_MAX = 2000
KRYLOV_DIM = 30
LOCAL_TOL = 1e-10


class KrylovError(RuntimeError):
    def __init__(self, msg: str, achieved: float):
        super().__init__(f"{msg} (achieved local error {achieved:.3e})")
        self.achieved = achieved


# ------------------------------------------------------------------ propagation

def _lanczos(H, v: np.ndarray, m: int):
    """Orthonormal Krylov basis ``Q`` and tridiagonal ``T`` (full reorthogonalisation)."""
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    Q = np.zeros((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    Q[0] = v / beta0
    k = m
    for j in range(m):
        w = H @ Q[j]
        alpha[j] = np.vdot(Q[j], w).real
        w = w - alpha[j] * Q[j] - (beta[j - 1] * Q[j - 1] if j > 0 else 0)
        w = w - Q[: j + 1].T @ (Q[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-14 * max(1.0, abs(alpha[j])):
            k = j + 1
            break
        Q[j + 1] = w / beta[j]
    return Q[:k], alpha[:k], beta[:k], beta0, k


def _krylov_step(H, psi: np.ndarray, t: float, m: int, tol: float, max_steps: int = 100000):
    """``exp(-iHt) psi`` by Lanczos substeps of adaptive length."""
    done = 0.0
    dt = t
    steps = 0
    while done < t * (1 - 1e-15):
        dt = min(dt, t - done)
        Q, a, b, nrm, k = _lanczos(H, psi, m)
        T = np.diag(a) + np.diag(b[: k - 1], 1) + np.diag(b[: k - 1], -1)
        evals, evecs = np.linalg.eigh(T)
        while True:
            y = evecs @ (np.exp(-1j * evals * dt) * evecs[0].conj())
            # the residual term beta_k |y_{k-1}| bounds the local error
            err = nrm * b[k - 1] * abs(y[k - 1]) if k == m else 0.0
            if err <= tol or dt < 1e-14 * max(t, 1.0):
                break
            dt *= 0.5
        if err > tol:
            raise KrylovError("Lanczos substep did not converge", err)
        psi = nrm * (Q.T @ y)
        done += dt
        steps += 1
        if steps > max_steps:
            raise KrylovError("substep budget exhausted", err)
        dt *= 1.5 if err < 0.1 * tol else 1.0
    return psi


class Propagator:
    """Repeated ``exp(-iHt)`` for one hermitian ``H``."""

    def __init__(self, H, dense_max: int = DENSE_MAX, krylov_dim: int = KRYLOV_DIM, tol: float = LOCAL_TOL):
        certify(H, "hermitian", tol=1e-10)
        self.H = sps.csr_matrix(H)
        self.dim = self.H.shape[0]
        self.krylov_dim = min(krylov_dim, self.dim)
        self.tol = tol
        self.dense = self.dim <= dense_max
        if self.dense:
            Hd = self.H.toarray()
            self.evals, self.evecs = np.linalg.eigh(0.5 * (Hd + Hd.conj().T))

    def __call__(self, psi: np.ndarray, t: float) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if t == 0:
            return psi.copy()
        if self.dense:
            c = self.evecs.conj().T @ psi
            return self.evecs @ (np.exp(-1j * self.evals * t) * c)
        return _krylov_step(self.H, psi, t, self.krylov_dim, self.tol)

    def trajectory(self, psi: np.ndarray, grid: Sequence[float]) -> list[np.ndarray]:
        """States on an increasing grid by sequential continuation."""
        out = []
        t_prev = 0.0
        cur = np.asarray(psi, dtype=complex)
        for t in grid:
            cur = self(cur, float(t) - t_prev)
            t_prev = float(t)
            out.append(cur)
        return out


def propagate(H, psi: np.ndarray, t: float, **kw) -> np.ndarray:
    """``exp(-iHt) psi``."""
    return Propagator(H, **kw)(psi, t)


# ---------------------------------------------------------------------- reports

@dataclass
class EvolutionReport:
    name: str
    grid: np.ndarray
    columns: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        for k, v in self.columns.items():
            if len(v) != len(self.grid):
                raise ValueError(f"column {k!r} has length {len(v)}, grid has {len(self.grid)}")

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])

    def to_csv(self) -> str:
        names = ["t"] + list(self.columns)
        rows = [tuple([t] + [self.columns[c][i] for c in self.columns]) for i, t in enumerate(self.grid)]
        meta = {"report": self.name, **self.metadata}
        return format_csv(names, rows, meta)


def fit_growth_constant(residual: np.ndarray, grid: np.ndarray, rate: float, scale: float) -> float:
    """Smallest ``C`` with ``C (exp(C rate t) - 1) scale >= residual`` on the grid."""
    residual = np.asarray(residual, dtype=float)
    grid = np.asarray(grid, dtype=float)
    mask = grid > 0
    if not np.any(residual[mask] > 0):
        return 0.0

    def ok(C):
        with np.errstate(over="ignore"):
            b = C * np.expm1(C * rate * grid[mask]) * scale
        return bool(np.all(b >= residual[mask]))

    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


def _fine_grid(grid: np.ndarray, sub: int) -> np.ndarray:
    fine = [0.0]
    for t0, t1 in zip(np.concatenate([[0.0], grid[:-1]]), grid):
        if t1 > t0:
            fine.extend(np.linspace(t0, t1, sub + 1)[1:].tolist())
    return np.array(fine)


def _accumulate(fine: np.ndarray, vals: np.ndarray, grid: np.ndarray):
    """Trapezoid integral of ``vals`` up to each grid time, and per-interval peaks."""
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(fine))])
    out = [cum[int(np.argmin(np.abs(fine - t)))] for t in grid]
    peak = []
    prev = 0.0
    for t in grid:
        sel = (fine >= prev - 1e-15) & (fine <= t + 1e-15)
        peak.append(float(vals[sel].max()) if np.any(sel) else float(vals[0]))
        prev = t
    return np.array(out), np.array(peak)


def _duhamel(Hb_minus_Ha, prop_a: Propagator, psi: np.ndarray, grid: np.ndarray, sub: int):
    """Cumulative ``int_0^t ||D exp(-i A s) psi|| ds`` (trapezoid on a refined grid).

    Also returns the largest integrand value inside each grid interval.
    """
    fine = _fine_grid(grid, sub)
    states = prop_a.trajectory(psi, fine[1:])
    vals = np.array([np.linalg.norm(Hb_minus_Ha @ psi)] + [np.linalg.norm(Hb_minus_Ha @ s) for s in states])
    return _accumulate(fine, vals, grid)


def _defect_duhamel(H, state_at, grid: np.ndarray, sub: int):
    """Cumulative ``int_0^t ||phi'(s) + i H phi(s)|| ds`` for a trajectory ``phi``.

    By Duhamel this bounds ``||exp(-iHt) phi(0) - phi(t)||``. The time
    derivative is a central difference.
    """
    fine = _fine_grid(grid, sub)
    step = 1e-5 * max(float(grid[-1]) if len(grid) else 1.0, 1e-12)
    vals = []
    for s in fine:
        d = (state_at(s + step) - state_at(s - step)) / (2.0 * step)
        vals.append(np.linalg.norm(d + 1j * (H @ state_at(s))))
    return _accumulate(fine, np.array(vals), grid)


def _lipschitz_ok(residual: np.ndarray, grid: np.ndarray, peak: np.ndarray) -> bool:
    jumps = np.abs(np.diff(np.concatenate([[0.0], residual])))
    dts = np.diff(np.concatenate([[0.0], grid]))
    return bool(np.all(jumps <= 2.0 * peak * dts + 1e-9))


def _model_meta(model: DeskModel) -> dict:
    return {"kF": model.kF, "lambda": model.lam, "M": model.M, "delta": model.delta,
            "p_cut": model.p_cut, "modes": len(model.modes), "dim": model.dim,
            "pair_modes": len(model.pair_modes), "impurity": getattr(model.imp, "kind", "static")}


def thm1_residual(model: DeskModel, grid: Sequence[float], duhamel_sub: int = 8) -> EvolutionReport:
    """``||R* e^{-iHt} R psi - e^{-iH^eff t} psi||`` for ``psi = phi (x) Omega``."""
    grid = np.asarray(grid, dtype=float)
    A = model.H_micro_ph()
    Heff = model.H_eff()
    psi = model.vacuum()
    pa, pe = Propagator(A), Propagator(Heff)
    s_a = pa.trajectory(psi, grid)
    s_e = pe.trajectory(psi, grid)
    res = np.array([np.linalg.norm(x - y) for x, y in zip(s_a, s_e)])
    duh, peak = _duhamel((A - Heff).tocsr(), pe, psi, grid, duhamel_sub)
    d = d_of(model.M, model.ball.N, model.delta, getattr(model.imp, "beta", 0.0), model.kF, model.lam)
    C = fit_growth_constant(res, grid, model.lam * model.kF, d)
    comp = C * np.expm1(C * model.lam * model.kF * grid) * d if math.isfinite(C) else np.full_like(grid, math.inf)
    norms = np.array([abs(np.linalg.norm(x) - 1.0) for x in s_a + s_e]).reshape(2, -1).max(axis=0)
    meta = _model_meta(model) | {"C_fit": C, "d": d, "lipschitz_ok": _lipschitz_ok(res, grid, peak)}
    return EvolutionReport("thm1", grid, {"residual": res, "duhamel": duh, "bound_fit": comp,
                                          "norm_drift": norms}, meta)


def coherent_state(model_or_params, t: float, *, model: DeskModel | None = None,
                   oracle: BosonicOracle | None = None) -> np.ndarray:
    """``e^{iP(t)} W(eta_t) Omega`` on the fermionic model or the oracle."""
    params = model_or_params
    eta = eta_values(params, t)
    P = phase_P(params, t)
    if oracle is not None:
        B = oracle.B(eta)
        vac = oracle.vacuum()
    else:
        B = model.B_of(eta)
        vac = model.vacuum()
    return np.exp(1j * P) * apply_weyl(B, vac)


def oracle_n_max(params: CoherentParams, grid: Sequence[float], tol: float = 1e-12, cap: int = 200) -> int:
    """Smallest cutoff whose Poisson tail at the largest ``|eta_t|^2`` is below ``tol``.

    The coherent oracle state has independent Poisson occupations with mean
    ``|eta_j(t)|^2``; the product over modes is bounded by the worst mode.
    """
    from scipy.stats import poisson

    means = np.max([np.abs(eta_values(params, float(t))) ** 2 for t in grid], axis=0)
    mu = float(np.max(means)) if means.size else 0.0
    n_modes = max(1, len(params.keys))
    n = 1
    while poisson.sf(n - 1, mu) * n_modes > tol:
        n += 1
        if n > cap:
            raise ValueError(f"oracle cutoff above {cap} needed for tail {tol:g}")
    return n


def thm2_residual(model: DeskModel, grid: Sequence[float], kind: str = "fermionic",
                  n_max: int | None = None, duhamel_sub: int = 4) -> EvolutionReport:
    """``||e^{-iH^eff t} psi - e^{iP(t)} W(eta_t) psi||`` (static impurity).

    ``kind="oracle"`` replaces the pair operators by exact bosons with the
    same energies and couplings; the evolved state's tail mass is reported.
    Without ``n_max`` the cutoff is chosen by :func:`oracle_n_max`. The
    ``duhamel`` column integrates the defect of the coherent trajectory
    under ``H^eff`` and bounds the residual independently.
    """
    if isinstance(model.imp, Truncated):
        raise ValueError("the coherent comparison needs a static impurity")
    grid = np.asarray(grid, dtype=float)
    params = model.coherent_params()
    cols = {}
    if kind == "oracle":
        if n_max is None:
            n_max = oracle_n_max(params, grid)
        orc = build_bosonic_oracle(params.eps, params.h, n_max)
        H = orc.H_eff(params.EpW)
        vac = orc.vacuum()

        def state_at(t):
            return coherent_state(params, t, oracle=orc)
    elif kind == "fermionic":
        H = model.H_eff()
        vac = model.vacuum()

        def state_at(t):
            return coherent_state(params, t, model=model)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    states = Propagator(H).trajectory(vac, grid)
    res = np.array([np.linalg.norm(s - state_at(t)) for s, t in zip(states, grid)])
    duh, peak = _defect_duhamel(H, state_at, grid, duhamel_sub)
    cols = {"residual": res, "duhamel": duh}
    if kind == "oracle":
        cols["tail_mass"] = np.array([orc.tail_mass(s) for s in states])
        cols["coherent_tail"] = np.array([orc.tail_mass(state_at(t)) for t in grid])
    meta = _model_meta(model) | {"kind": kind, "lipschitz_ok": _lipschitz_ok(res, grid, peak)}
    if kind == "oracle":
        meta["n_max_used"] = n_max
    return EvolutionReport("thm2", grid, cols, meta)


def cor_gap(model: DeskModel, grid: Sequence[float]) -> EvolutionReport:
    """Distance between the full and the no-coupling evolution, with the floor."""
    grid = np.asarray(grid, dtype=float)
    A = model.H_micro_ph()
    Ht = model.H_eff_tilde()
    psi = model.vacuum()
    s_a = Propagator(A).trajectory(psi, grid)
    s_t = Propagator(Ht).trajectory(psi, grid)
    gap = np.array([np.linalg.norm(x - y) for x, y in zip(s_a, s_t)])
    fp = make_floor_params(model.lam, model.kF, model.V, M=model.M, delta=model.delta,
                           beta=getattr(model.imp, "beta", 0.0))
    floor = np.array([corollary_floor(fp, t)[0] for t in grid])
    flag = (gap >= floor).astype(float)
    meta = _model_meta(model) | {"theta": fp.theta, "d": fp.d}
    return EvolutionReport("cor", grid, {"gap": gap, "floor": floor, "gap_ge_floor": flag}, meta)


def _moments(N, states, n: int, shift: float) -> np.ndarray:
    out = []
    for s in states:
        v = s
        for _ in range(n):
            v = N @ v + shift * v
        out.append(np.vdot(s, v).real)
    return np.array(out)


def fit_moment_constant(moments: np.ndarray, ref: float, grid: np.ndarray, n: int, rate: float) -> float:
    """Smallest ``C`` with ``moments(t) <= exp(n C rate t) ref`` on the grid."""
    grid = np.asarray(grid, dtype=float)
    mask = grid > 0
    if not np.any(mask):
        return 0.0
    c = np.log(np.maximum(moments[mask], 1e-300) / ref) / (n * rate * grid[mask])
    return float(max(0.0, c.max()))


def moment_growth(model: DeskModel, n: int, grid: Sequence[float], flow: str = "heff",
                  eta: np.ndarray | None = None) -> EvolutionReport:
    """``<psi_t, (N+1)^n psi_t>`` along ``H^eff`` or along ``exp(tau B)``.

    The fitted constant is the smallest ``C`` for which
    ``exp(n C r t) <psi, (N+3)^n psi>`` dominates, with ``r = lam kF`` for the
    effective flow and ``r = ||eta||`` for the Weyl flow.
    """
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    grid = np.asarray(grid, dtype=float)
    psi = model.vacuum()
    N = model.N
    if flow == "heff":
        states = Propagator(model.H_eff()).trajectory(psi, grid)
        rate = model.lam * model.kF
    elif flow == "weyl":
        if eta is None:
            eta = model.h
        B = model.B_of(eta)
        states = [apply_weyl(B, psi, float(t)) for t in grid]
        rate = float(np.linalg.norm(eta)) or 1.0
    else:
        raise ValueError(f"unknown flow {flow!r}")
    mom = _moments(N, states, n, 1.0)
    ref = float(_moments(N, [psi], n, 3.0)[0])
    C = fit_moment_constant(mom, ref, grid, n, rate)
    bound = np.exp(n * C * rate * grid) * ref
    meta = _model_meta(model) | {"n": n, "flow": flow, "C_fit": C, "rate": rate,
                                 "C_over_V1": C / model.V.norm1}
    return EvolutionReport("moments", grid, {"moment": mom, "bound": bound}, meta)


def laplacian_diagnostic(model: DeskModel, grid: Sequence[float], q0=(0, 0, 0)) -> EvolutionReport:
    """``||Delta_y W(eta_t) phi (x) Omega||`` with shift-valued ``eta_t``."""
    if model.impb is None:
        raise ValueError("the Laplacian diagnostic needs a truncated impurity")
    grid = np.asarray(grid, dtype=float)
    params = model.coherent_params()
    ib = model.impb
    lap = sps.kron(ib.laplacian(), sps.identity(model.ph.dim, format="csr"), format="csr")
    psi = model.vacuum(q0)
    vals, shape, tails = [], [], []
    for t in grid:
        eta = eta_values(params, float(t))
        B = sps.csr_matrix((model.dim, model.dim), dtype=complex)
        for i, pm in enumerate(model.pair_modes):
            B = B + eta[i] * _lift(ib, model.alg.cd(i), pm.k)
            B = B - np.conj(eta[i]) * _lift(ib, model.alg.c(i), tuple(-x for x in pm.k))
        B = B.tocsr()
        v = apply_weyl(B, psi)
        vals.append(float(np.linalg.norm(lap @ v)))
        e = float(np.linalg.norm(eta))
        shape.append((e + e ** 4) * (math.exp(e) + 1.0))
        edge = np.zeros(ib.dim, dtype=bool)
        r2 = (ib.q * ib.q).sum(axis=1)
        edge[r2 == r2.max()] = True
        tails.append(float(np.sum(np.abs(v.reshape(ib.dim, -1)[edge]) ** 2)))
    vals = np.array(vals)
    shape = np.array(shape)
    base = float(np.dot(q0, q0))
    sel = shape > 0
    C = float(np.max((vals[sel] - base) / shape[sel])) if np.any(sel) else 0.0
    meta = _model_meta(model) | {"q0": tuple(q0), "C_fit": max(C, 0.0)}
    return EvolutionReport("laplacian", grid, {"value": vals, "shape": shape, "edge_mass": np.array(tails)}, meta)
