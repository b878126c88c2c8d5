"""Equal-area patch decomposition of the Fermi sphere and pair counts.

The north hemisphere is split into a polar cap of area ``4*pi/M`` and
``ceil(sqrt(M)/2)`` collars. Each collar is cut into cells of equal
azimuthal width, the number of cells per collar being chosen by rounding
with carry so that the total is ``M/2 - 1``; collar boundaries are then
moved so that every cell has area exactly ``4*pi/M``. The south hemisphere
is the point reflection of the north one, patch ``alpha + M/2`` being the
image of patch ``alpha``.

Corridors are cut out by shrinking each cell by ``R/kF`` (an angle) along
each of its boundaries. Azimuthal boundaries are shrunk by
``R/(kF*sin(theta_c))`` so the corridor has roughly constant geodesic width.

Indices are 0-based in code (``alpha = 0`` is the north polar cap).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import FermiBall, Momentum, lattice_points, norm_sq

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Patch:
    alpha: int
    center: np.ndarray = field(repr=False)
    area: float
    # shrunken bounds in the patch's own hemisphere frame (north frame for
    # south patches, which are reflections): cos(theta) decreasing interval
    # [cos_lo, cos_hi] and azimuth interval [phi_lo, phi_hi]
    cos_hi: float
    cos_lo: float
    phi_lo: float
    phi_hi: float
    unshrunk_area: float


@dataclass(frozen=True)
class PatchSet:
    M: int
    kF: float
    N: int
    delta: float
    corridor: float
    patches: tuple
    # collar layout for the north hemisphere (cap is collar 0 with 1 cell)
    collar_cos: np.ndarray = field(repr=False)  # boundaries, decreasing, starts at 1
    cells_per_collar: tuple = ()
    diagnostic: bool = False

    @property
    def threshold(self) -> float:
        if self.diagnostic:
            return 0.0
        return float(self.N) ** (-self.delta)

    @property
    def centers(self) -> np.ndarray:
        return np.array([p.center for p in self.patches])

    @property
    def areas(self) -> np.ndarray:
        return np.array([p.area for p in self.patches])

    @property
    def corridor_area(self) -> float:
        return float(sum(p.unshrunk_area - p.area for p in self.patches))

    @property
    def half(self) -> int:
        return self.M // 2

    def describe(self) -> dict:
        """Layout summary suitable for output metadata."""
        return {
            "M": self.M,
            "collars": len(self.cells_per_collar) - 1,
            "cells_per_collar": list(self.cells_per_collar),
            "corridor_halfwidth": self.corridor,
            "corridor_angle": self.corridor / self.kF if self.kF > 0 else 0.0,
            "scheme": "zonal equal-area, cap + collars, carry rounding",
        }

    def label(self, points: np.ndarray) -> np.ndarray:
        """Patch index of each lattice point, or -1 if it lies in a corridor.

        Classification uses the direction ``p/|p|``. The origin is given the
        direction of the north pole. Points on a boundary go to the lower
        index, so the equator belongs to the north hemisphere.
        """
        return classify(self, points)


def _collar_layout(M: int) -> tuple[np.ndarray, list[int]]:
    """Cosine boundaries and cell counts of the north hemisphere.

    Returns ``cos_b`` with ``cos_b[0] = 1`` and ``cos_b[-1] = 0`` and the
    number of cells in each zone; zone 0 is the polar cap.
    """
    half = M // 2
    area = 4.0 * math.pi / M
    cos_cap = 1.0 - 2.0 / M
    rest = half - 1
    if rest == 0:
        return np.array([1.0, 0.0]), [1]
    n_coll = min(math.ceil(math.sqrt(M) / 2.0), rest)
    theta_cap = math.acos(cos_cap)
    # ideal collars of equal polar-angle width between the cap and equator
    edges = np.linspace(theta_cap, math.pi / 2.0, n_coll + 1)
    ideal = [TWO_PI * (math.cos(edges[j]) - math.cos(edges[j + 1])) / area for j in range(n_coll)]
    cells = []
    carry = 0.0
    for j, x in enumerate(ideal):
        c = max(1, int(round(x + carry)))
        carry += x - c
        cells.append(c)
    cells[-1] += rest - sum(cells)
    if cells[-1] < 1:
        # fold an empty last collar into the previous one
        extra = cells.pop()
        cells[-1] += extra
    cos_b = [1.0, cos_cap]
    acc = 1
    for c in cells:
        acc += c
        cos_b.append(max(0.0, 1.0 - acc * 2.0 / M))
    cos_b[-1] = 0.0
    return np.array(cos_b), [1] + cells


def build_patch_set(M: int, kF: float, N: int, delta: float = 2.0 / 15.0,
                    corridor: float = 0.0) -> PatchSet:
    """Build the ``M``-patch decomposition of the unit sphere.

    ``corridor`` is the half-width ``R`` in lattice units; the angular
    corridor between two neighbouring cells is ``2R/kF``.
    """
    if not isinstance(M, (int, np.integer)) or M < 2 or M % 2:
        raise ValueError(f"M must be an even integer >= 2, got {M}")
    if corridor < 0:
        raise ValueError("corridor half-width must be nonnegative")
    if corridor > 0 and kF <= 0:
        raise ValueError("a nonzero corridor needs kF > 0")
    M = int(M)
    w = corridor / kF if corridor > 0 else 0.0
    cos_b, cells = _collar_layout(M)
    theta_b = np.arccos(np.clip(cos_b, -1.0, 1.0))
    north: list[tuple] = []
    for z, ncell in enumerate(cells):
        t_a, t_b = theta_b[z], theta_b[z + 1]
        if z == 0:
            t_a_s = 0.0
        else:
            t_a_s = t_a + w
        t_b_s = t_b - w
        dphi = TWO_PI / ncell
        t_c = math.acos(0.5 * (math.cos(t_a) + math.cos(t_b)))
        for j in range(ncell):
            p_a, p_b = j * dphi, (j + 1) * dphi
            if ncell == 1:
                p_a_s, p_b_s = 0.0, TWO_PI
            else:
                shrink = w / max(math.sin(t_c), 1e-300)
                p_a_s, p_b_s = p_a + shrink, p_b - shrink
            phi_c = 0.5 * (p_a + p_b) if ncell > 1 else 0.0
            if z == 0:
                center = np.array([0.0, 0.0, 1.0])
            else:
                st = math.sin(t_c)
                center = np.array([st * math.cos(phi_c), st * math.sin(phi_c), math.cos(t_c)])
                center /= np.linalg.norm(center)
            if t_b_s <= t_a_s or p_b_s <= p_a_s:
                raise ValueError(
                    f"corridor {corridor} at kF={kF} leaves no area in zone {z}; reduce the corridor or M")
            # use the exact zone cosines where nothing is shrunk so that
            # boundary ties agree with the zone table
            c_hi = cos_b[z] if t_a_s == t_a or z == 0 else math.cos(t_a_s)
            c_lo = cos_b[z + 1] if w == 0 else math.cos(t_b_s)
            if z == 0:
                c_hi = 1.0
            full = (p_b - p_a) * (cos_b[z] - cos_b[z + 1])
            shr = (p_b_s - p_a_s) * (c_hi - c_lo)
            north.append((center, shr, c_hi, c_lo, p_a_s, p_b_s, full))
    assert len(north) == M // 2
    patches = []
    for a, (c, ar, ch, cl, pl, ph, full) in enumerate(north):
        patches.append(Patch(a, c, ar, ch, cl, pl, ph, full))
    for a, (c, ar, ch, cl, pl, ph, full) in enumerate(north):
        patches.append(Patch(a + M // 2, -c, ar, ch, cl, pl, ph, full))
    for p in patches:
        p.center.setflags(write=False)
    ps = PatchSet(M=M, kF=float(kF), N=int(N), delta=float(delta), corridor=float(corridor),
                  patches=tuple(patches), collar_cos=cos_b, cells_per_collar=tuple(cells))
    check_patch_condition(ps)
    return ps


def diagnostic_patch_set(kF: float, N: int) -> PatchSet:
    """A single patch covering the whole sphere with no threshold.

    Every point is labelled 0 and ``k`` is never reflected, so pair counts
    reduce to plain shell-pair counts.
    """
    p = Patch(0, np.array([0.0, 0.0, 1.0]), 4 * math.pi, 1.0, -1.0, 0.0, TWO_PI, 4 * math.pi)
    return PatchSet(M=1, kF=float(kF), N=int(N), delta=0.0, corridor=0.0, patches=(p,),
                    collar_cos=np.array([1.0, -1.0]), cells_per_collar=(1,), diagnostic=True)


def check_patch_condition(ps: PatchSet) -> bool:
    """Warn when ``M`` is not comfortably between ``N^{2 delta}`` and ``N^{2/3 - 2 delta}``."""
    lo = ps.N ** (2 * ps.delta)
    hi = ps.N ** (2.0 / 3.0 - 2 * ps.delta)
    ok = lo < ps.M < hi
    if not ok:
        log.warning("M=%d outside the window (%.3g, %.3g) for N=%d, delta=%.4g",
                    ps.M, lo, hi, ps.N, ps.delta)
    return ok


def default_M(N: int) -> int:
    """``N^{16/45}`` rounded to the nearest even integer (at least 2)."""
    x = float(N) ** (16.0 / 45.0)
    return max(2, 2 * int(round(x / 2.0)))


def classify(ps: PatchSet, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if ps.diagnostic:
        return np.zeros(len(pts), dtype=np.int64)
    r = np.sqrt((pts * pts).sum(axis=1))
    south = pts[:, 2] < 0
    # reflect south points into the north frame
    q = np.where(south[:, None], -pts, pts)
    with np.errstate(invalid="ignore", divide="ignore"):
        cz = np.where(r > 0, q[:, 2] / np.where(r > 0, r, 1.0), 1.0)
    cz = np.clip(cz, 0.0, 1.0)
    phi = np.mod(np.arctan2(q[:, 1], q[:, 0]), TWO_PI)
    cos_b = ps.collar_cos
    # zone z covers cos in [cos_b[z+1], cos_b[z]); ties go to lower zone,
    # i.e. cos == cos_b[z] belongs to zone z-1 except the pole
    zone = np.searchsorted(-cos_b, -cz, side="left") - 1
    zone = np.clip(zone, 0, len(cos_b) - 2)
    cells = np.asarray(ps.cells_per_collar)
    offsets = np.concatenate(([0], np.cumsum(cells)[:-1]))
    nc = cells[zone]
    dphi = TWO_PI / nc
    cell = np.ceil(phi / dphi).astype(np.int64) - 1
    cell = np.clip(cell, 0, nc - 1)
    alpha = offsets[zone] + cell
    # corridor test against the shrunken bounds
    ch = np.array([p.cos_hi for p in ps.patches[: ps.half]])
    cl = np.array([p.cos_lo for p in ps.patches[: ps.half]])
    pl = np.array([p.phi_lo for p in ps.patches[: ps.half]])
    ph = np.array([p.phi_hi for p in ps.patches[: ps.half]])
    inside = (cz <= ch[alpha]) & (cz >= cl[alpha]) & (phi >= pl[alpha]) & (phi <= ph[alpha])
    if ps.corridor == 0:
        inside[:] = True
    alpha = np.where(south, alpha + ps.half, alpha)
    return np.where(inside, alpha, -1).astype(np.int64)


@dataclass(frozen=True)
class IndexSet:
    k: Momentum
    north: tuple
    south: tuple

    @property
    def all(self) -> tuple:
        return tuple(sorted(self.north + self.south))


def index_set(ps: PatchSet, k) -> IndexSet:
    kv = np.asarray(k, dtype=np.float64)
    if ps.diagnostic:
        return IndexSet(tuple(int(x) for x in k), (0,), ())
    dots = ps.centers @ kv
    thr = ps.threshold
    north = tuple(int(a) for a in np.nonzero(dots >= thr)[0])
    south = tuple(int(a) for a in np.nonzero(dots <= -thr)[0])
    return IndexSet(tuple(int(x) for x in k), north, south)


@dataclass(frozen=True)
class PairWeight:
    alpha: int
    k: Momentum
    count_sq: int
    hemisphere: str  # "north" or "south"

    @property
    def n(self) -> float:
        return math.sqrt(self.count_sq)

    @property
    def shift(self) -> Momentum:
        """The momentum ``k'`` used to form pairs (p, p - k') on this patch."""
        if self.hemisphere == "south":
            return tuple(-x for x in self.k)
        return self.k


def _shell(ball: FermiBall, kmax2: int) -> np.ndarray:
    # p outside the ball with p - k' inside: kF^2 < |p|^2 <= (kF + |k|)^2
    r_out = math.sqrt(ball.r2) + math.sqrt(kmax2)
    r2_out = int(math.floor(r_out * r_out)) + 1
    pts = lattice_points(r2_out)
    n2 = (pts * pts).sum(axis=1)
    return pts[n2 > ball.r2]


def _counts_for_shift(ball: FermiBall, ps: PatchSet, shell: np.ndarray, shift: np.ndarray,
                      labels: np.ndarray) -> np.ndarray:
    q = shell - shift
    ok = (q * q).sum(axis=1) <= ball.r2
    lab_p = labels[ok]
    lab_q = ps.label(q[ok])
    same = (lab_p == lab_q) & (lab_p >= 0)
    return np.bincount(lab_p[same], minlength=max(ps.M, 1))


def pair_counts(ball: FermiBall, ps: PatchSet, k, *, shell: np.ndarray | None = None,
                labels: np.ndarray | None = None) -> dict[int, PairWeight]:
    """Exact pair counts ``m^2`` for every ``alpha`` in the index set of ``k``.

    Patches whose count vanishes are dropped with a warning.
    """
    k = tuple(int(x) for x in k)
    kv = np.array(k, dtype=np.int64)
    if shell is None:
        shell = _shell(ball, norm_sq(k))
    if labels is None:
        labels = ps.label(shell)
    iset = index_set(ps, k)
    out: dict[int, PairWeight] = {}
    if iset.north:
        cn = _counts_for_shift(ball, ps, shell, kv, labels)
        for a in iset.north:
            out[a] = PairWeight(a, k, int(cn[a]), "north")
    if iset.south:
        cs = _counts_for_shift(ball, ps, shell, -kv, labels)
        for a in iset.south:
            out[a] = PairWeight(a, k, int(cs[a]), "south")
    dropped = [a for a, w in out.items() if w.count_sq == 0]
    if dropped:
        log.warning("k=%s: dropping patches %s with zero pair count", k, dropped)
    return {a: out[a] for a in sorted(out) if out[a].count_sq > 0}


def pair_count(ball: FermiBall, ps: PatchSet, alpha: int, k) -> PairWeight:
    """Exact pair count of a single patch; ``alpha`` must lie in ``I_k``."""
    k = tuple(int(x) for x in k)
    iset = index_set(ps, k)
    if alpha in iset.north:
        hemi, shift = "north", np.array(k)
    elif alpha in iset.south:
        hemi, shift = "south", -np.array(k)
    else:
        raise ValueError(f"alpha={alpha} is not in the index set of k={k}")
    shell = _shell(ball, norm_sq(k))
    labels = ps.label(shell)
    c = _counts_for_shift(ball, ps, shell, shift, labels)
    return PairWeight(alpha, k, int(c[alpha]), hemi)


@dataclass(frozen=True)
class WeightTable:
    """Pair weights for all ``k`` in Gamma; the input to every coherent formula."""

    ball: FermiBall = field(repr=False)
    patches: PatchSet = field(repr=False)
    gamma: tuple
    weights: dict = field(repr=False)  # k -> {alpha: PairWeight}

    def entries(self):
        """Flat list of ``(k, alpha, PairWeight)`` in deterministic order."""
        return [(k, a, self.weights[k][a]) for k in self.gamma for a in sorted(self.weights[k])]

    def arrays(self):
        """Per-entry arrays: k vectors, alpha, n^2, ``|k . omega_alpha|``."""
        ent = self.entries()
        if not ent:
            return (np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64),
                    np.zeros(0), np.zeros(0))
        ks = np.array([e[0] for e in ent], dtype=np.int64)
        al = np.array([e[1] for e in ent], dtype=np.int64)
        m2 = np.array([e[2].count_sq for e in ent], dtype=np.float64)
        cen = self.patches.centers[al]
        dots = np.abs((ks * cen).sum(axis=1))
        return ks, al, m2, dots

    def sum_n_squared(self, k) -> int:
        return int(sum(w.count_sq for w in self.weights[tuple(k)].values()))


def build_weights(ball: FermiBall, ps: PatchSet, gamma) -> WeightTable:
    gamma = tuple(tuple(int(x) for x in k) for k in gamma)
    if not gamma:
        return WeightTable(ball, ps, (), {})
    kmax2 = max(norm_sq(k) for k in gamma)
    shell = _shell(ball, kmax2)
    labels = ps.label(shell)
    weights = {k: pair_counts(ball, ps, k, shell=shell, labels=labels) for k in gamma}
    return WeightTable(ball, ps, gamma, weights)


def n_alpha_asymptotic(kF: float, M: int, dot: float) -> float:
    """``sqrt(4 pi kF^2 |k.omega| / M)`` for ``dot = k . omega_alpha``."""
    return math.sqrt(4.0 * math.pi * kF * kF * abs(dot) / M)


def sum_n_squared(ball: FermiBall, ps: PatchSet, k) -> tuple[int, float]:
    """Exact ``sum_alpha n_alpha(k)^2`` over ``I_k`` and the comparator ``kF^2 |k| pi``."""
    w = pair_counts(ball, ps, k)
    total = int(sum(x.count_sq for x in w.values()))
    return total, ball.kF ** 2 * math.sqrt(norm_sq(k)) * math.pi
