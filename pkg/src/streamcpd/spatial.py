"""Neighbourhood systems, sparsity masks, pooled designs and lag selection.

A neighbourhood system partitions, for every location s, the other locations
into disjoint symmetric rings N_1(s), ..., N_n(s) (N_0(s) = {s} implicitly).
A decay map pi assigns to every lag l the largest ring index whose members may
affect a location after l steps.  Together they induce per-lag S x S sparsity
masks on the autoregressive coefficient matrices, optionally pooled by ring.

The design layout turns these into per-step S x k design blocks whose stacked
coefficient vector is (alpha_1..alpha_S, vec(B), allowed lag-1 entries,
allowed lag-2 entries, ...).  Without pooling, the allowed source locations of
each (location, lag) appear in location-id order so that the unrestricted mask
reproduces a plain dense VAR design exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NeighbourhoodSystem",
    "DecaySpec",
    "SparsityMask",
    "DesignLayout",
    "build_from_coords",
    "sparsity_pattern",
    "full_layout",
    "lag_grid",
    "design_row",
]

POOLINGS = ("none", "per-location-ring", "global-ring")


class NeighbourhoodSystem:
    """Per-location disjoint rings with guaranteed symmetry.

    rings[s][i-1] is the i-th neighbourhood of location s as a sorted tuple.
    """

    def __init__(self, rings: list[list[tuple[int, ...]]]):
        self.n_locations = len(rings)
        depths = {len(r) for r in rings}
        if len(depths) > 1:
            raise ValueError("all locations must carry the same number of rings")
        self.n_rings = depths.pop() if depths else 0
        self.rings = [[tuple(sorted(members)) for members in loc] for loc in rings]
        self._validate()
        # ring index lookup: ring_of[s][s2] = i for s2 in N_i(s), 0 for s itself
        self._ring_of = [dict() for _ in range(self.n_locations)]
        for s in range(self.n_locations):
            self._ring_of[s][s] = 0
            for i, members in enumerate(self.rings[s], start=1):
                for s2 in members:
                    self._ring_of[s][s2] = i

    def _validate(self):
        for s, loc_rings in enumerate(self.rings):
            seen: set[int] = set()
            for i, members in enumerate(loc_rings, start=1):
                for s2 in members:
                    if s2 == s:
                        raise ValueError(f"location {s} occurs in its own ring {i}")
                    if not 0 <= s2 < self.n_locations:
                        raise ValueError(f"unknown location id {s2}")
                    if s2 in seen:
                        raise ValueError(f"rings of location {s} are not disjoint at {s2}")
                    seen.add(s2)
                    if s not in self.rings[s2][i - 1]:
                        raise ValueError(
                            f"asymmetric neighbourhood: {s2} in N_{i}({s}) "
                            f"but {s} not in N_{i}({s2})"
                        )

    def ring_index(self, s: int, s2: int) -> int | None:
        """Ring of s2 around s (0 for s itself), or None if unrelated."""
        return self._ring_of[s].get(s2)

    def neighbours_within(self, s: int, max_ring: int) -> list[int]:
        """Locations in rings 0..max_ring of s, id-ordered, including s."""
        allowed = [s]
        for i in range(1, min(max_ring, self.n_rings) + 1):
            allowed.extend(self.rings[s][i - 1])
        return sorted(allowed)


def build_from_coords(coords=None, radii=(), distances=None) -> NeighbourhoodSystem:
    """Concentric-ring system: N_i(s) = {s' != s : radii[i-1] < d(s,s') <= radii[i]}.

    Either euclidean ``coords`` (S, dim) or a precomputed symmetric
    ``distances`` matrix with zero diagonal.  Boundary ties go to the inner
    ring (half-open bins with inclusive upper edge).
    """
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing positive reals")
    if distances is not None:
        d = np.asarray(distances, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.allclose(d, d.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.abs(np.diag(d)) > 0):
            raise ValueError("distance matrix must have zero diagonal")
    else:
        pts = np.asarray(coords, dtype=float)
        if pts.ndim != 2:
            raise ValueError("coords must be a (S, dim) array")
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
    n_loc = d.shape[0]
    edges = [0.0] + radii
    rings: list[list[tuple[int, ...]]] = []
    for s in range(n_loc):
        loc = []
        for lo, hi in zip(edges, edges[1:]):
            members = [s2 for s2 in range(n_loc)
                       if s2 != s and lo < d[s, s2] <= hi]
            loc.append(tuple(members))
        rings.append(loc)
    return NeighbourhoodSystem(rings)


@dataclass(frozen=True)
class DecaySpec:
    """pi[l-1] = largest ring index felt after l time steps (l = 1..L)."""

    pi: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "pi", tuple(int(v) for v in self.pi))
        if any(v < 0 for v in self.pi):
            raise ValueError("decay values must be non-negative ring indices")

    @property
    def max_lag(self) -> int:
        return len(self.pi)

    def __call__(self, lag: int) -> int:
        return self.pi[lag - 1]

    def truncated(self, lag: int) -> "DecaySpec":
        if lag > len(self.pi):
            raise ValueError(f"decay map covers lags 1..{len(self.pi)}, need {lag}")
        return DecaySpec(self.pi[:lag])


@dataclass
class SparsityMask:
    """Per-lag boolean masks plus the pooling mode and group labels.

    masks[l-1][s, s2] is True iff s2 may affect s after l steps.  ``groups``
    maps (lag, location, group key) to the tuple of pooled source locations;
    for pooling "none" every group is a singleton keyed by the source id, for
    ring pooling groups are keyed by ring index.  ``labels`` enumerates the
    distinct free coefficients of the lag matrices.
    """

    masks: list[np.ndarray]
    pooling: str
    nbh: NeighbourhoodSystem
    decay: DecaySpec

    @property
    def lag(self) -> int:
        return len(self.masks)

    @property
    def n_locations(self) -> int:
        return self.masks[0].shape[0] if self.masks else 0

    def location_groups(self, lag: int, s: int) -> list[tuple[object, tuple[int, ...]]]:
        """Ordered (label, member-locations) pairs for one (lag, location)."""
        max_ring = self.decay(lag)
        if self.pooling == "none":
            return [((lag, s, s2), (s2,))
                    for s2 in self.nbh.neighbours_within(s, max_ring)]
        groups = []
        for i in range(0, max_ring + 1):
            members = (s,) if i == 0 else self.nbh.rings[s][i - 1]
            label = (lag, i) if self.pooling == "global-ring" else (lag, s, i)
            groups.append((label, tuple(members)))
        return groups

    def labels(self) -> list[object]:
        """Distinct free-coefficient labels of the lag matrices."""
        seen: dict[object, None] = {}
        for lag in range(1, self.lag + 1):
            for s in range(self.n_locations):
                for label, _ in self.location_groups(lag, s):
                    seen.setdefault(label, None)
        return list(seen)


def sparsity_pattern(lag: int, nbh: NeighbourhoodSystem, decay: DecaySpec,
                     pooling: str = "none") -> SparsityMask:
    """Masks for lags 1..lag: (s, s2) allowed iff s2 within ring pi(l) of s."""
    if pooling not in POOLINGS:
        raise ValueError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
    decay = decay.truncated(lag)
    if any(decay(l) > nbh.n_rings for l in range(1, lag + 1)):
        raise ValueError(
            f"decay map exceeds the {nbh.n_rings} rings of the neighbourhood system"
        )
    n_loc = nbh.n_locations
    masks = []
    for l in range(1, lag + 1):
        m = np.zeros((n_loc, n_loc), dtype=bool)
        for s in range(n_loc):
            for s2 in nbh.neighbours_within(s, decay(l)):
                m[s, s2] = True
        masks.append(m)
    return SparsityMask(masks=masks, pooling=pooling, nbh=nbh, decay=decay)


def _trivial_system(n_locations: int) -> NeighbourhoodSystem:
    """One ring holding everyone else: the unrestricted dependence structure."""
    rings = [[tuple(s2 for s2 in range(n_locations) if s2 != s)]
             for s in range(n_locations)]
    return NeighbourhoodSystem(rings)


class DesignLayout:
    """Column layout of the stacked coefficient vector and design builders.

    Columns: alpha_s per location, then per-location exogenous blocks, then
    for each lag the allowed coefficient groups.  ``design_matrix`` emits the
    S x k block of one time step; row s is non-zero only on its own columns
    (plus globally pooled ones).
    """

    def __init__(self, mask: SparsityMask, n_exo: int = 0):
        self.mask = mask
        self.n_exo = int(n_exo)
        self.out_dim = mask.n_locations
        self.lag = mask.lag
        s_count = self.out_dim
        self._col_of_label: dict[object, int] = {}
        # per location: list of (column, lag, member tuple)
        self._terms: list[list[tuple[int, int, tuple[int, ...]]]] = [
            [] for _ in range(s_count)
        ]
        col = s_count + s_count * self.n_exo
        for l in range(1, self.lag + 1):
            for s in range(s_count):
                for label, members in mask.location_groups(l, s):
                    if label in self._col_of_label:
                        c = self._col_of_label[label]
                    else:
                        c = col
                        self._col_of_label[label] = c
                        col += 1
                    self._terms[s].append((c, l, members))
        self.n_coefficients = col

    def intercept_column(self, s: int) -> int:
        return s

    def exo_columns(self, s: int) -> range:
        base = self.out_dim + s * self.n_exo
        return range(base, base + self.n_exo)

    def design_matrix(self, window: np.ndarray, z=None) -> np.ndarray:
        """Design block from the last ``lag`` observations (window[-1] = y_{t-1})."""
        window = np.atleast_2d(np.asarray(window, dtype=float))
        if window.shape[0] < self.lag:
            raise ValueError(
                f"need {self.lag} past observations, got {window.shape[0]}"
            )
        if self.n_exo and z is None:
            raise ValueError("layout expects an exogenous vector")
        x = np.zeros((self.out_dim, self.n_coefficients))
        for s in range(self.out_dim):
            x[s, s] = 1.0
            if self.n_exo:
                x[s, self.exo_columns(s)] = np.asarray(z, dtype=float)
            for c, l, members in self._terms[s]:
                past = window[-l]
                x[s, c] += past[list(members)].sum() if len(members) > 1 else past[members[0]]
        return x

    def design_row(self, window: np.ndarray, s: int, z=None) -> np.ndarray:
        """Compressed per-location row: intercept, exogenous, grouped regressors."""
        window = np.atleast_2d(np.asarray(window, dtype=float))
        if window.shape[0] < self.lag:
            raise ValueError(
                f"need {self.lag} past observations, got {window.shape[0]}"
            )
        vals = [1.0]
        if self.n_exo:
            vals.extend(np.asarray(z, dtype=float))
        for _, l, members in self._terms[s]:
            past = window[-l]
            vals.append(past[list(members)].sum() if len(members) > 1 else past[members[0]])
        return np.array(vals)


def design_row(history, z, mask: SparsityMask, s: int) -> np.ndarray:
    """Per-location design row under a sparsity mask (see DesignLayout.design_row)."""
    n_exo = 0 if z is None else len(np.atleast_1d(z))
    return DesignLayout(mask, n_exo=n_exo).design_row(history, s, z=z)


def full_layout(n_locations: int, lag: int, n_exo: int = 0) -> DesignLayout:
    """Unrestricted VAR design: every location feels every location at every lag."""
    if lag == 0:
        # intercept-only layout: empty mask list, handled via a 0-lag mask
        nbh = _trivial_system(n_locations)
        mask = SparsityMask(masks=[], pooling="none", nbh=nbh, decay=DecaySpec(()))
        return DesignLayout(mask, n_exo=n_exo)
    nbh = _trivial_system(n_locations)
    decay = DecaySpec((1,) * lag)
    return DesignLayout(sparsity_pattern(lag, nbh, decay, "none"), n_exo=n_exo)


def lag_length(T: float, C: float = 1.0) -> int:
    """L(T) = max(1, floor(C * (T / ln T)^(1/6))), clamped to 1 for T <= 2."""
    if T <= 2:
        return 1
    return max(1, math.floor(C * (T / math.log(T)) ** (1.0 / 6.0)))


def lag_grid(t1: int, t2: int, C: float = 1.0) -> list[int]:
    """All integer lags between L(t1) and L(t2) for expected segment lengths."""
    if not (1 <= t1 <= t2):
        raise ValueError(f"need 1 <= t1 <= t2, got t1={t1}, t2={t2}")
    if C <= 0:
        raise ValueError(f"lag constant must be positive, got {C}")
    lo, hi = lag_length(t1, C), lag_length(t2, C)
    return list(range(lo, hi + 1))
