"""Lower-bound machinery showing the linear coupling is a leading-order effect.

All unnamed constants are set to 1, so every output is a scale with
constants suppressed.

``b_of`` is the antiderivative of ``b_dot`` (zero at t = 0). ``h_of`` is the
stated solution ``h_t = exp(-theta t) int_0^t b_dot(s) exp(theta s) ds - d``;
``ode_residuals`` reports how well it satisfies each of the two candidate
differential equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.integrate import quad

from .lattice import Potential, build_fermi_ball, gamma_set, norm_sq
from .patches import WeightTable, default_M

SCALE_NOTE = "scale, constants suppressed"


@dataclass(frozen=True)
class FloorParams:
    lam: float
    kF: float
    beta: float
    M: int
    N: int
    delta: float
    V: Potential = field(repr=False)
    theta: float
    d: float
    theta_mode: str = "closed"

    @property
    def gamma(self):
        return gamma_set(self.V)

    def k_terms(self):
        """``(V(k)^2, |k|)`` for every ``k`` in Gamma."""
        return [(self.V(k) ** 2, math.sqrt(norm_sq(k))) for k in self.gamma]


def h_norm_sq_closed(lam: float, kF: float, V: Potential, convention: str = "half") -> float:
    ks = gamma_set(V) if convention == "half" else V.support
    return lam * lam * math.pi * kF * kF * math.fsum(V(k) ** 2 * math.sqrt(norm_sq(k)) for k in ks)


def h_norm_sq_exact(lam: float, V: Potential, table: WeightTable) -> float:
    return lam * lam * math.fsum(V(k) ** 2 * table.sum_n_squared(k) for k in table.gamma)


def theta_of(lam: float, kF: float, V: Potential, *, mode: str = "closed",
             table: WeightTable | None = None, convention: str = "half") -> float:
    """``||h|| + 2 ||h||^2 / kF`` with ``||h||^2`` exact (patch sums) or closed."""
    if mode == "exact":
        if table is None:
            raise ValueError("exact theta needs a weight table")
        h2 = h_norm_sq_exact(lam, V, table)
    elif mode == "closed":
        h2 = h_norm_sq_closed(lam, kF, V, convention)
    else:
        raise ValueError(f"unknown theta mode {mode!r}")
    if h2 == 0:
        return 0.0
    return math.sqrt(h2) + 2.0 * h2 / kF


def d_of(M: float, N: float, delta: float, beta: float, kF: float, lam: float) -> float:
    """``max(M N^{-2/3+delta}, beta / (kF lam))``."""
    a = M * float(N) ** (-2.0 / 3.0 + delta)
    b = beta / (kF * lam) if beta > 0 else 0.0
    return max(a, b)


def make_floor_params(lam: float, kF: float, V: Potential, *, beta: float = 0.0,
                      M: int | None = None, delta: float = 2.0 / 15.0,
                      theta_mode: str = "closed", table: WeightTable | None = None,
                      convention: str = "half") -> FloorParams:
    N = table.ball.N if table is not None else build_fermi_ball(kF).N
    if M is None:
        M = table.patches.M if table is not None else default_M(N)
    th = theta_of(lam, kF, V, mode=theta_mode, table=table, convention=convention)
    return FloorParams(lam=float(lam), kF=float(kF), beta=float(beta), M=int(M), N=int(N),
                       delta=float(delta), V=V, theta=th, d=d_of(M, N, delta, beta, kF, lam),
                       theta_mode=theta_mode)


def t_star(kF: float, knorm: float) -> float:
    """Branch point ``pi / (4 kF |k|)`` where ``2 kF |k| t = pi/2``."""
    return math.pi / (4.0 * kF * knorm)


def _bdot_branch(kF: float, knorm: float, t: float) -> float:
    x = 2.0 * kF * knorm * t
    if x > math.pi / 2:
        return 1.0 / x
    return 8.0 * kF * knorm * t / math.pi ** 2


def b_dot(p: FloorParams, t: float) -> float:
    pref = math.pi * p.lam ** 2 * p.kF
    return pref * math.fsum(v2 * _bdot_branch(p.kF, kn, t) for v2, kn in p.k_terms())


def _b_branch(kF: float, knorm: float, t: float) -> float:
    ts = t_star(kF, knorm)
    if t <= ts:
        return 4.0 * kF * knorm * t * t / math.pi ** 2
    return 1.0 / (4.0 * kF * knorm) + math.log(t / ts) / (2.0 * kF * knorm)


def b_of(p: FloorParams, t: float) -> float:
    pref = math.pi * p.lam ** 2 * p.kF
    return pref * math.fsum(v2 * _b_branch(p.kF, kn, t) for v2, kn in p.k_terms())


def f_of(t: float) -> float:
    """``exp(-t) + t - 1``."""
    return math.expm1(-t) + t


def _weighted_integral(p: FloorParams, t: float) -> float:
    """``int_0^t b_dot(s) exp(theta (s - t)) ds`` by adaptive quadrature."""
    if t <= 0:
        return 0.0
    th = p.theta
    pref = math.pi * p.lam ** 2 * p.kF
    total = []
    for v2, kn in p.k_terms():
        ts = t_star(p.kF, kn)
        pts = [ts] if 0 < ts < t else None
        val, _ = quad(lambda s: _bdot_branch(p.kF, kn, s) * math.exp(th * (s - t)), 0.0, t,
                      points=pts, epsabs=0.0, epsrel=1e-12, limit=400)
        total.append(v2 * val)
    return pref * math.fsum(total)


def h_of(p: FloorParams, t: float) -> float:
    return _weighted_integral(p, t) - p.d


def ode_residuals(p: FloorParams, t: float, step: float | None = None) -> dict:
    """Central-difference residuals of the two candidate equations at ``t``.

    ``forced``:   h' = b' - theta (h + d)   (solved by the stated formula)
    ``unforced``: h' = b' - theta h          (derivative of the integral form)

    Residuals are divided by ``max(|b'(t)|, theta |h + d|, 1e-300)``.
    """
    if step is None:
        step = 1e-6 * max(t, 1.0 / max(p.kF, 1.0))
    if t - step < 0:
        raise ValueError("t must exceed the difference step")
    dh = (h_of(p, t + step) - h_of(p, t - step)) / (2.0 * step)
    h = h_of(p, t)
    bd = b_dot(p, t)
    scale = max(abs(bd), p.theta * abs(h + p.d), 1e-300)
    return {
        "forced": abs(dh - (bd - p.theta * (h + p.d))) / scale,
        "unforced": abs(dh - (bd - p.theta * h)) / scale,
    }


def corollary_floor(p: FloorParams, t: float) -> tuple[float, float]:
    """The displayed lower bound and the argument ``theta t``."""
    th = p.theta
    if th == 0:
        return -p.d, 0.0
    terms = []
    for v2, kn in p.k_terms():
        terms.append(v2 * kn * min(f_of(th * t), f_of(math.pi * th / (4.0 * p.kF * kn))))
    val = p.lam ** 2 * p.kF ** 2 / (th * th * math.pi) * math.fsum(terms)
    return val - p.d, th * t


FLOOR_COLUMNS = ("t", "b", "h", "floor", "d", "theta")


def floor_rows(p: FloorParams, grid) -> list[tuple]:
    rows = []
    for t in grid:
        t = float(t)
        fl, _ = corollary_floor(p, t)
        rows.append((t, b_of(p, t), h_of(p, t), fl, p.d, p.theta))
    return rows

