"""Momentum-lattice geometry on the torus of side 2*pi.

Momenta are integer 3-vectors. Every membership test against a real radius
is done on the exact integer ``|k|^2`` against an integer squared radius, and
every ordered sequence of modes uses lexicographic order so that fermionic
sign conventions downstream are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

Momentum = tuple[int, int, int]


def radius_sq(k: float) -> int:
    """Largest integer ``r2`` with ``r2 <= k**2``.

    A float that squares to within 1e-9 of an integer is snapped to that
    integer, so ``math.sqrt(2)`` and ``math.sqrt(3)`` give 2 and 3.
    """
    if k < 0:
        raise ValueError(f"radius must be nonnegative, got {k}")
    sq = float(k) * float(k)
    nearest = round(sq)
    if abs(sq - nearest) <= 1e-9 * max(1.0, nearest):
        return int(nearest)
    return math.floor(Fraction(k) ** 2)


def norm_sq(k) -> int:
    return int(k[0]) ** 2 + int(k[1]) ** 2 + int(k[2]) ** 2


def lattice_points(r2: int) -> np.ndarray:
    """All integer points with ``|p|^2 <= r2`` in lexicographic order."""
    if r2 < 0:
        return np.zeros((0, 3), dtype=np.int64)
    r = math.isqrt(r2)
    ax = np.arange(-r, r + 1, dtype=np.int64)
    # meshgrid with ij indexing enumerates in lexicographic order already
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    keep = (g * g).sum(axis=1) <= r2
    return g[keep]


def shell_points(r2_in: int, r2_out: int) -> np.ndarray:
    """Integer points with ``r2_in < |p|^2 <= r2_out``, lexicographic."""
    pts = lattice_points(r2_out)
    return pts[(pts * pts).sum(axis=1) > r2_in]


@dataclass(frozen=True)
class FermiBall:
    kF: float
    r2: int
    modes: np.ndarray = field(repr=False)
    N: int
    EpW: int

    def contains(self, p) -> bool:
        return norm_sq(p) <= self.r2

    def as_tuples(self) -> list[Momentum]:
        return [tuple(int(x) for x in row) for row in self.modes]


def build_fermi_ball(kF: float) -> FermiBall:
    r2 = radius_sq(kF)
    modes = lattice_points(r2)
    modes.setflags(write=False)
    epw = int((modes * modes).sum())
    return FermiBall(kF=float(kF), r2=r2, modes=modes, N=len(modes), EpW=epw)


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    """Fourier coefficients of the impurity-fermion interaction.

    ``values`` maps each support momentum to a nonnegative real.
    """

    values: Mapping[Momentum, float]

    def __post_init__(self):
        clean: dict[Momentum, float] = {}
        for k, v in self.values.items():
            key = tuple(int(x) for x in k)
            if len(key) != 3:
                raise PotentialError(f"momentum {k} is not a 3-vector")
            if v < 0:
                raise PotentialError(f"V({key}) = {v} is negative")
            clean[key] = float(v)
        for k, v in clean.items():
            mk = (-k[0], -k[1], -k[2])
            if mk not in clean or clean[mk] != v:
                raise PotentialError(f"potential is not even: V({k}) = {v}, V({mk}) = {clean.get(mk)}")
        object.__setattr__(self, "values", dict(sorted(clean.items())))

    @property
    def support(self) -> list[Momentum]:
        return list(self.values)

    def __call__(self, k) -> float:
        return self.values.get(tuple(int(x) for x in k), 0.0)

    @property
    def norm1(self) -> float:
        return float(sum(self.values.values()))

    @property
    def norm2(self) -> float:
        return math.sqrt(sum(v * v for v in self.values.values()))

    @property
    def sqrt_norm2(self) -> float:
        """The l2 norm of the square root of V, i.e. ``sqrt(sum V)``."""
        return math.sqrt(sum(self.values.values()))

    @property
    def support_radius(self) -> float:
        if not self.values:
            return 0.0
        return math.sqrt(max(norm_sq(k) for k in self.values))

    def scaled(self, factor: float) -> "Potential":
        return Potential({k: factor * v for k, v in self.values.items()})

    @classmethod
    def uniform(cls, support: Iterable, value: float = 1.0) -> "Potential":
        return cls({tuple(k): value for k in support})

    @classmethod
    def ball(cls, radius_sq_: int, value: float = 1.0) -> "Potential":
        """Constant ``value`` on all nonzero ``k`` with ``|k|^2 <= radius_sq_``."""
        pts = lattice_points(radius_sq_)
        return cls({tuple(int(x) for x in p): value for p in pts if norm_sq(p) > 0})

    @classmethod
    def from_file(cls, path) -> "Potential":
        """Read lines ``kx ky kz value``; ``#`` starts a comment."""
        values: dict[Momentum, float] = {}
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise PotentialError(f"{path}:{lineno}: expected 'kx ky kz value', got {raw!r}")
            try:
                k = (int(parts[0]), int(parts[1]), int(parts[2]))
                v = float(parts[3])
            except ValueError as exc:
                raise PotentialError(f"{path}:{lineno}: {exc}") from None
            if k in values:
                raise PotentialError(f"{path}:{lineno}: duplicate momentum {k}")
            values[k] = v
        return cls(values)

    def to_text(self) -> str:
        return "".join(f"{k[0]} {k[1]} {k[2]} {v!r}\n" for k, v in self.values.items())


def in_half_space(k) -> bool:
    """Lexicographic-positive representative test used for Gamma."""
    k1, k2, k3 = k
    return k3 > 0 or (k3 == 0 and k2 > 0) or (k3 == 0 and k2 == 0 and k1 > 0)


def gamma_set(V: Potential) -> list[Momentum]:
    """One representative of every +-pair in the support of ``V``."""
    support = set(V.support)
    if (0, 0, 0) in support:
        raise PotentialError("support contains k = 0, which has no half-set representative")
    for k in support:
        if (-k[0], -k[1], -k[2]) not in support:
            raise PotentialError(f"support is not symmetric at {k}")
    return sorted(k for k in support if in_half_space(k))


@dataclass(frozen=True)
class ModeSet:
    modes: np.ndarray = field(repr=False)
    inside: np.ndarray = field(repr=False)
    r2_ball: int

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    def index(self) -> dict[Momentum, int]:
        return {tuple(int(x) for x in p): i for i, p in enumerate(self.modes)}

    def as_tuples(self) -> list[Momentum]:
        return [tuple(int(x) for x in p) for p in self.modes]


def _mode_set(points: np.ndarray, r2_ball: int) -> ModeSet:
    points = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0]))
    points = points[order]
    if len(points) > 1 and np.any(np.all(np.diff(points, axis=0) == 0, axis=1)):
        raise ValueError("duplicate modes")
    inside = (points * points).sum(axis=1) <= r2_ball
    points.setflags(write=False)
    inside.setflags(write=False)
    return ModeSet(points, inside, r2_ball)


def build_mode_set(ball: FermiBall, V: Potential | None, p_cut: float) -> ModeSet:
    """All lattice points with ``|p| <= p_cut``, flagged inside/outside the ball.

    ``V`` is accepted for interface symmetry; the truncation is the sphere of
    radius ``p_cut``, which contains every pair partner ``p`` with
    ``|p| <= p_cut`` by construction.
    """
    c2 = radius_sq(p_cut)
    if c2 < ball.r2:
        raise ValueError(f"p_cut = {p_cut} is smaller than kF = {ball.kF}")
    return _mode_set(lattice_points(c2), ball.r2)


def mode_subset(ball: FermiBall, points: Iterable) -> ModeSet:
    """An explicit mode list; it must contain every mode of ``ball``."""
    pts = np.array([tuple(p) for p in points], dtype=np.int64).reshape(-1, 3)
    have = {tuple(int(x) for x in p) for p in pts}
    missing = [m for m in ball.as_tuples() if m not in have]
    if missing:
        raise ValueError(f"mode subset misses Fermi-ball modes {missing}")
    return _mode_set(pts, ball.r2)
