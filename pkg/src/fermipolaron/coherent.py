"""Closed-form coherent-state trajectory of the pair excitations.

With ``h = lam * V(k) * n_alpha(k)`` (static impurity at y = 0) and
``eps = 2 kF |k . omega_alpha|`` the trajectory is

    eta_s  = (exp(-i s eps) - 1) / eps * h
    nu_s   = sum (exp(-i s eps) + i s eps - 1) / eps^2 * |h|^2
    P(t)   = 2 Im nu_t - E_pw t - Im int_0^t <d eta_s/ds, eta_s> ds

Every formula is evaluated through functions that are regular at
``eps = 0`` so nothing ever divides by ``eps``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .lattice import Potential, norm_sq
from .patches import WeightTable

log = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286060651209008240243


# ---------------------------------------------------------------- special functions

def _cin_series(x: float, terms: int = 40) -> float:
    """``int_0^x (1 - cos t)/t dt`` by its Taylor series (all terms summed)."""
    x2 = x * x
    term = 1.0  # x^{2n} / (2n)!
    total = 0.0
    for n in range(1, terms + 1):
        term *= x2 / ((2 * n - 1) * (2 * n))
        total += (-1) ** (n + 1) * term / (2 * n)
    return total


def _e1_imag_cf(x: float) -> complex:
    """``E1(i x)`` for ``x > 0`` via the modified Lentz continued fraction."""
    tiny = 1e-300
    b = complex(1.0, x)
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    else:  # pragma: no cover - the fraction converges fast for x > 2
        raise ArithmeticError(f"continued fraction for Ci did not converge at x={x}")
    return h * complex(math.cos(x), -math.sin(x))


CI_SWITCH = 4.0


def cosine_integral(x: float) -> float:
    """``Ci(x) = gamma + ln x + int_0^x (cos t - 1)/t dt`` for ``x > 0``.

    A 40-term power series is used for ``x <= 4``; above that the value is
    ``-Re E1(i x)`` from a continued fraction, accurate to about 1e-15.
    """
    x = float(x)
    if not x > 0:
        raise ValueError(f"Ci is defined for x > 0, got {x}")
    if x <= CI_SWITCH:
        return EULER_GAMMA + math.log(x) - _cin_series(x)
    return -_e1_imag_cf(x).real


def cin(x: float) -> float:
    """``log x - Ci(x) + gamma``, continuous at 0 with value 0."""
    x = float(x)
    if x < 0:
        raise ValueError("cin needs x >= 0")
    if x == 0:
        return 0.0
    if x <= CI_SWITCH:
        return _cin_series(x)
    return EULER_GAMMA + math.log(x) - cosine_integral(x)


# --------------------------------------------------------- regular kernel functions

def _q(x: np.ndarray) -> np.ndarray:
    """``(x - sin x) / x^2``, odd and regular at 0."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    xs = x[small]
    x2 = xs * xs
    # x/6 - x^3/120 + x^5/5040 - x^7/362880 + x^9/39916800
    out[small] = xs * (1 / 6 - x2 * (1 / 120 - x2 * (1 / 5040 - x2 * (1 / 362880 - x2 / 39916800))))
    xl = x[~small]
    out[~small] = (xl - np.sin(xl)) / (xl * xl)
    return out


def _g(x: np.ndarray) -> np.ndarray:
    """``(exp(-i x) + i x - 1) / x^2`` with its limit -1/2 at 0."""
    x = np.asarray(x, dtype=np.float64)
    re = -0.5 * np.sinc(x / (2 * np.pi)) ** 2
    return re + 1j * _q(x)


# ------------------------------------------------------------------- parameters

@dataclass(frozen=True)
class CoherentParams:
    """Flat per-entry data of the coherent trajectory.

    One entry per ``(k, alpha)`` with ``k`` in Gamma and ``alpha`` in ``I_k``.
    """

    lam: float
    kF: float
    EpW: float
    V: Potential | None = field(repr=False)
    keys: tuple = field(repr=False)  # ((k, alpha), ...)
    kvec: np.ndarray = field(repr=False)
    vhat: np.ndarray = field(repr=False)
    n: np.ndarray = field(repr=False)
    eps: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kF > 0 and not (self.kF ** (-1.0 / 6.0) - 1e-12 <= self.lam <= 1.0 + 1e-12):
            log.warning("lambda=%g is outside [kF^(-1/6), 1] = [%g, 1]", self.lam, self.kF ** (-1 / 6))

    @property
    def h(self) -> np.ndarray:
        return self.lam * self.vhat * self.n

    @property
    def h_norm_sq(self) -> float:
        return math.fsum((self.h ** 2).tolist())

    @classmethod
    def from_weights(cls, table: WeightTable, V: Potential, lam: float) -> "CoherentParams":
        ks, al, m2, dots = table.arrays()
        keys = tuple((tuple(int(x) for x in k), int(a)) for k, a in zip(ks, al))
        vhat = np.array([V(k) for k in ks], dtype=np.float64)
        kF = table.ball.kF
        return cls(lam=float(lam), kF=kF, EpW=float(table.ball.EpW), V=V, keys=keys,
                   kvec=ks, vhat=vhat, n=np.sqrt(m2), eps=2.0 * kF * dots)

    @classmethod
    def from_arrays(cls, h, eps, *, EpW: float = 0.0, kF: float = 0.0) -> "CoherentParams":
        """Bare parameters: coupling ``h`` (lam = 1, V = 1) and energies ``eps``."""
        h = np.atleast_1d(np.asarray(h, dtype=np.float64))
        eps = np.atleast_1d(np.asarray(eps, dtype=np.float64))
        keys = tuple(((0, 0, 0), i) for i in range(len(h)))
        return cls(lam=1.0, kF=kF, EpW=float(EpW), V=None, keys=keys,
                   kvec=np.zeros((len(h), 3), dtype=np.int64), vhat=np.ones_like(h), n=h, eps=eps)


# --------------------------------------------------------------------- trajectory

@dataclass(frozen=True)
class EtaField:
    s: float
    keys: tuple = field(repr=False)
    values: np.ndarray = field(repr=False)
    mode: str = "static"

    def norm_sq(self) -> float:
        return math.fsum((np.abs(self.values) ** 2).tolist())

    def as_dict(self) -> dict:
        return dict(zip(self.keys, self.values))


def eta_values(params: CoherentParams, s: float) -> np.ndarray:
    # (e^{-i s eps} - 1)/eps = -i e^{-i s eps/2} sin(eps s/2)/(eps/2)
    amp = s * np.sinc(params.eps * s / (2 * np.pi))
    return -1j * np.exp(-0.5j * s * params.eps) * amp * params.h


def eta_dot_values(params: CoherentParams, s: float) -> np.ndarray:
    return -1j * np.exp(-1j * s * params.eps) * params.h


def eta_at(params: CoherentParams, s: float, mode: str = "static") -> EtaField:
    if mode not in ("static", "shift"):
        raise ValueError(f"unknown eta mode {mode!r}")
    return EtaField(float(s), params.keys, eta_values(params, s), mode)


def nu_at(params: CoherentParams, s: float) -> complex:
    terms = s * s * _g(s * params.eps) * params.h ** 2
    return complex(math.fsum(terms.real.tolist()), math.fsum(terms.imag.tolist()))


def im_eta_dot_eta(params: CoherentParams, s: float) -> float:
    """``Im <d eta_s/ds, eta_s> = sum (1 - cos(eps s))/eps |h|^2``."""
    # (1 - cos(eps s))/eps = s * eps s / 2 * sinc(eps s / 2 pi)^2
    x = params.eps * s
    vals = 0.5 * s * x * np.sinc(x / (2 * np.pi)) ** 2 * params.h ** 2
    return math.fsum(vals.tolist())


def im_integral(params: CoherentParams, t: float) -> float:
    """Closed form of ``Im int_0^t <d eta_s/ds, eta_s> ds``."""
    vals = t * t * _q(params.eps * t) * params.h ** 2
    return math.fsum(vals.tolist())


def im_integral_quad(params: CoherentParams, t: float) -> float:
    """Adaptive-quadrature value of the same integral (independent check)."""
    from scipy.integrate import quad

    val, _ = quad(lambda s: im_eta_dot_eta(params, s), 0.0, t, epsabs=0.0, epsrel=1e-13, limit=500)
    return val


@dataclass(frozen=True)
class PhaseData:
    nu: complex
    P: float
    im_integral: float


def phase(params: CoherentParams, t: float) -> PhaseData:
    nu = nu_at(params, t)
    ii = im_integral(params, t)
    return PhaseData(nu, 2.0 * nu.imag - params.EpW * t - ii, ii)


def phase_P(params: CoherentParams, t: float) -> float:
    return phase(params, t).P


def norm_sq_exact(params: CoherentParams, s: float) -> float:
    amp = s * np.sinc(params.eps * s / (2 * np.pi)) * params.h
    return math.fsum((amp * amp).tolist())


CLOSED_CONVENTIONS = ("half", "full")


def norm_sq_closed(lam: float, kF: float, V: Potential, s: float, convention: str = "half") -> float:
    """Leading-order closed form of ``||eta_s||^2``.

    ``convention="half"`` sums ``pi lam^2 V(k)^2/|k| * cin(2 kF |k| s)`` over
    the half-set Gamma. The patch sum runs over both hemispheres of the
    sphere, which doubles that value; ``convention="full"`` sums over the
    whole support and is the limit the exact norm actually approaches.
    """
    from .lattice import gamma_set

    if convention not in CLOSED_CONVENTIONS:
        raise ValueError(f"convention must be one of {CLOSED_CONVENTIONS}")
    ks = gamma_set(V) if convention == "half" else V.support
    terms = []
    for k in ks:
        kn = math.sqrt(norm_sq(k))
        terms.append(V(k) ** 2 / kn * cin(2.0 * kF * kn * s))
    return math.pi * lam * lam * math.fsum(terms)


def small_s_coefficient(lam: float, kF: float, V: Potential, convention: str = "half") -> float:
    """``lim_{s->0} norm_sq_closed / s^2 = pi lam^2 kF^2 sum V^2 |k|``."""
    from .lattice import gamma_set

    ks = gamma_set(V) if convention == "half" else V.support
    return math.pi * lam * lam * kF * kF * math.fsum(V(k) ** 2 * math.sqrt(norm_sq(k)) for k in ks)


def bound_eta(lam: float, kF: float, V: Potential, s: float) -> float:
    a = math.sqrt(math.pi) * V.sqrt_norm2 * lam * kF * s
    b = math.sqrt(2 * math.pi) * V.norm2 * lam * math.log(4 * kF * s + 2)
    return min(a, b)


def bound_f(V: Potential, y: float, x: float) -> float:
    a = math.sqrt(math.pi) * V.sqrt_norm2 * y * x
    b = (math.sqrt(2 * math.pi) * V.norm2 * (math.log(18.0) + 1.0 / 9.0) * y
         + math.sqrt(8 * math.pi) / 9.0 * V.norm2 * y * x)
    return math.exp(min(a, b))


def expected_excitations(params: CoherentParams, s: float) -> float:
    """Leading term ``2 ||eta_s||^2`` of the expected excitation number."""
    return 2.0 * norm_sq_exact(params, s)


def weighted_eta_norms(params: CoherentParams, s: float, n: int) -> tuple[float, float]:
    """``(sum_k || |k|^n eta_s(k) ||, <eta_s, |k|^n eta_s>)``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    vals = eta_values(params, s)
    knorm = np.sqrt((params.kvec * params.kvec).sum(axis=1).astype(np.float64))
    w = knorm ** n
    per_k: dict = {}
    for key, v, wk in zip(params.keys, vals, w):
        per_k.setdefault(key[0], []).append((wk * abs(v)) ** 2)
    first = math.fsum(math.sqrt(math.fsum(x)) for x in per_k.values())
    second = math.fsum((w * np.abs(vals) ** 2).tolist())
    return first, second


def weighted_constant(V: Potential, n: int) -> float:
    """Explicit finite-support constant ``max |k|^n * |Gamma|``."""
    from .lattice import gamma_set

    g = gamma_set(V)
    if not g:
        return 0.0
    return max(math.sqrt(norm_sq(k)) ** n for k in V.support) * len(g)


# -------------------------------------------------------------------------- output

CURVE_COLUMNS = ("s", "norm_sq_exact", "norm_sq_closed", "bound_eta", "expected_excitations")


def curve_rows(params: CoherentParams, grid: Sequence[float], convention: str = "half") -> list[tuple]:
    grid = [float(s) for s in grid]
    if any(s < 0 for s in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be nonnegative and strictly increasing")
    rows = []
    for s in grid:
        ex = norm_sq_exact(params, s)
        rows.append((s, ex, norm_sq_closed(params.lam, params.kF, params.V, s, convention),
                     bound_eta(params.lam, params.kF, params.V, s), 2.0 * ex))
    return rows


def format_csv(columns: Sequence[str], rows, meta: dict | None = None) -> str:
    """CSV text with ``#``-prefixed metadata lines; floats use ``repr``."""
    buf = io.StringIO()
    for key in sorted(meta or {}):
        buf.write(f"# {key} = {meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def emit_curve(params: CoherentParams, grid: Sequence[float], path, meta: dict | None = None,
               convention: str = "half") -> str:
    text = format_csv(CURVE_COLUMNS, curve_rows(params, grid, convention), meta)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write curve to {path}: {exc}") from exc
    return text
