"""Finite lattice boxes, disorder sampling, and random tight-binding Hamiltonians.

Sites of the centered box of radius L in dimension d are the integer vectors
with every coordinate in [-L, L], ordered lexicographically; that ordering is
the matrix index convention used everywhere else in the package.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ResourceError

Site = tuple[int, ...]

#: dense matrices beyond this many sites are refused (O(n^3) spectral work)
MAX_DENSE_SITES = 4096

SAMPLER_MODES = ("uniform-iid", "circle-phase-iid", "zero")


def _canonical_edge(x: Site, y: Site) -> tuple[Site, Site]:
    return (x, y) if x <= y else (y, x)


@dataclass(frozen=True)
class LatticeBox:
    """Centered box {x in Z^d : |x_i| <= L} with its site ordering and edges."""

    dimension: int
    radius: int
    sites: tuple[Site, ...] = field(init=False, repr=False)
    index: dict[Site, int] = field(init=False, repr=False)
    edges: tuple[tuple[Site, Site], ...] = field(init=False, repr=False)

    def __post_init__(self):
        d, L = self.dimension, self.radius
        if d < 1:
            raise ConfigError(f"dimension must be >= 1, got {d}")
        if L < 0:
            raise ConfigError(f"radius must be >= 0, got {L}")
        n = (2 * L + 1) ** d
        if n > MAX_DENSE_SITES:
            raise ResourceError(f"box has {n} sites, above the dense cap {MAX_DENSE_SITES}")
        sites = tuple(itertools.product(range(-L, L + 1), repeat=d))
        index = {x: i for i, x in enumerate(sites)}
        edges = []
        for x in sites:
            for j in range(d):
                y = x[:j] + (x[j] + 1,) + x[j + 1:]
                if y in index:
                    edges.append((x, y))
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def __contains__(self, site: Site) -> bool:
        return site in self.index

    def site_indices(self, sites) -> np.ndarray:
        """Indices of the given sites in this box's ordering."""
        try:
            return np.array([self.index[tuple(s)] for s in sites], dtype=int)
        except KeyError as err:
            raise DomainError(f"site {err.args[0]} is outside the box") from None


def collection_edges(sites: set[Site]) -> list[tuple[Site, Site]]:
    """Nearest-neighbor edges with both endpoints in the given site set."""
    out = []
    for x in sites:
        for j in range(len(x)):
            y = x[:j] + (x[j] + 1,) + x[j + 1:]
            if y in sites:
                out.append((x, y))
    return out


def boundary_edges(parent_sites: set[Site], cell: set[Site]) -> list[tuple[Site, Site]]:
    """Edges inside the parent with exactly one endpoint in the cell."""
    out = []
    for x in cell:
        for j in range(len(x)):
            for step in (+1, -1):
                y = x[:j] + (x[j] + step,) + x[j + 1:]
                if y in parent_sites and y not in cell:
                    out.append(_canonical_edge(x, y))
    return sorted(set(out))


@dataclass(frozen=True)
class BoxDecomposition:
    """Tiling of a parent box by disjoint translated cells of radius l.

    Cells are the translates (cell box) + (2l+1)x that fit inside the parent;
    sites covered by no cell are kept separately, as are the per-cell edge
    sets joining a cell to the rest of the parent.
    """

    parent: LatticeBox
    cell_radius: int
    cells: tuple[tuple[Site, ...], ...] = field(init=False, repr=False)
    uncovered_sites: tuple[Site, ...] = field(init=False, repr=False)
    boundary_edges: tuple[tuple[tuple[Site, Site], ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        d, L, l = self.parent.dimension, self.parent.radius, self.cell_radius
        if l < 1:
            raise ConfigError(f"cell radius must be >= 1, got {l}")
        width = 2 * l + 1
        reach = (L - l) // width if L >= l else -1
        cells = []
        for center in itertools.product(range(-reach, reach + 1), repeat=d) if reach >= 0 else ():
            shift = tuple(width * c for c in center)
            cell = tuple(
                tuple(s + o for s, o in zip(site, shift))
                for site in itertools.product(range(-l, l + 1), repeat=d)
            )
            cells.append(cell)
        covered = set().union(*map(set, cells)) if cells else set()
        uncovered = tuple(s for s in self.parent.sites if s not in covered)
        parent_sites = set(self.parent.sites)
        bedges = tuple(tuple(boundary_edges(parent_sites, set(c))) for c in cells)
        object.__setattr__(self, "cells", tuple(cells))
        object.__setattr__(self, "uncovered_sites", uncovered)
        object.__setattr__(self, "boundary_edges", bedges)


@dataclass(frozen=True)
class ModelParams:
    """Potential strength, hopping-disorder strength, inverse temperature."""

    lam: float = 0.0
    theta: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.lam < 0 or self.theta < 0 or self.beta < 0:
            raise ConfigError("lam, theta and beta must be non-negative")


@dataclass(frozen=True)
class DisorderSample:
    """One disorder realization: site potentials in [-1,1], edge values in the unit disc."""

    omega1: dict[Site, float]
    omega2: dict[tuple[Site, Site], complex]
    seed: int
    mode: str

    def site(self, x: Site) -> float:
        try:
            return self.omega1[x]
        except KeyError:
            raise DomainError(f"no potential entry for site {x}") from None

    def edge(self, x: Site, y: Site) -> complex:
        try:
            return self.omega2[_canonical_edge(x, y)]
        except KeyError:
            raise DomainError(f"no hopping entry for edge {{{x}, {y}}}") from None

    def to_json(self, box: LatticeBox) -> str:
        """Reproducibility record; entries follow the box's site/edge order."""
        doc = {
            "seed": self.seed,
            "mode": self.mode,
            "d": box.dimension,
            "L": box.radius,
            "omega1": [self.omega1[x] for x in box.sites],
            "omega2": [[self.omega2[e].real, self.omega2[e].imag] for e in box.edges],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> tuple["DisorderSample", LatticeBox]:
        doc = json.loads(text)
        box = LatticeBox(doc["d"], doc["L"])
        omega1 = dict(zip(box.sites, map(float, doc["omega1"])))
        omega2 = {e: complex(re, im) for e, (re, im) in zip(box.edges, doc["omega2"])}
        return cls(omega1, omega2, int(doc["seed"]), doc["mode"]), box


def _rng(seed: int) -> np.random.Generator:
    # counter-based bit generator: samples are a pure function of the key
    return np.random.Generator(np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))


def sample_disorder(box: LatticeBox, seed: int, mode: str = "uniform-iid") -> DisorderSample:
    """Draw one disorder realization on the box, deterministically in (seed, box, mode).

    Modes: "uniform-iid" draws potentials uniform on [-1,1] and hoppings
    uniform on the closed unit disc; "circle-phase-iid" puts hoppings on the
    unit circle (a pure random vector potential); "zero" is the clean system.
    """
    if mode not in SAMPLER_MODES:
        raise ConfigError(f"unknown sampler mode {mode!r}; expected one of {SAMPLER_MODES}")
    n, m = box.n_sites, len(box.edges)
    if mode == "zero":
        w1 = np.zeros(n)
        w2 = np.zeros(m, dtype=complex)
    else:
        rng = _rng(seed)
        w1 = rng.uniform(-1.0, 1.0, size=n)
        if mode == "circle-phase-iid":
            w2 = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=m))
        else:
            # rejection sampling: uniform on the closed unit disc
            w2 = np.empty(m, dtype=complex)
            filled = 0
            while filled < m:
                cand = rng.uniform(-1.0, 1.0, size=(2 * (m - filled) + 8, 2))
                keep = cand[(cand ** 2).sum(axis=1) <= 1.0]
                take = min(len(keep), m - filled)
                w2[filled:filled + take] = keep[:take, 0] + 1j * keep[:take, 1]
                filled += take
    omega1 = dict(zip(box.sites, w1.tolist()))
    omega2 = dict(zip(box.edges, w2.tolist()))
    return DisorderSample(omega1, omega2, seed, mode)


def shift_disorder(omega: DisorderSample, shift: Site) -> DisorderSample:
    """Translate the realization: new value at y is the old value at y + shift.

    The shifted sample is defined on sites x for which x + shift had an entry;
    shrinking support is fine, escaping it entirely is a domain error.
    """
    omega1 = {}
    for x in omega.omega1:
        src = tuple(a + b for a, b in zip(x, shift))
        if src in omega.omega1:
            omega1[x] = omega.omega1[src]
    omega2 = {}
    for (x, y) in omega.omega2:
        sx = tuple(a + b for a, b in zip(x, shift))
        sy = tuple(a + b for a, b in zip(y, shift))
        key = _canonical_edge(sx, sy)
        if key in omega.omega2:
            omega2[_canonical_edge(x, y)] = omega.omega2[key]
    if not omega1:
        raise DomainError(f"shift {shift} moves the sample entirely off its support")
    return DisorderSample(omega1, omega2, omega.seed, omega.mode)


def hopping_entry(omega: DisorderSample, params: ModelParams, x: Site, y: Site) -> complex:
    """Matrix element <e_x, Delta e_y> of the disordered hopping operator.

    Diagonal entries are 2d; nearest-neighbor entries carry the edge disorder,
    conjugated for the descending orientation so the operator is Hermitian.
    """
    if x == y:
        return complex(2 * len(x))
    w = omega.edge(x, y)
    if (x, y) != _canonical_edge(x, y):
        w = np.conj(w)
    return -(1.0 + params.theta * w)


def build_hamiltonian(box: LatticeBox, omega: DisorderSample, params: ModelParams) -> np.ndarray:
    """Dense one-particle Hamiltonian on the box with open boundaries.

    Diagonal: 2d + lam * omega1(x). Hopping on in-box edges:
    -(1 + theta * omega2(edge)) in the ascending orientation, conjugate
    transpose in the other.
    """
    n = box.n_sites
    d = box.dimension
    h = np.zeros((n, n), dtype=complex)
    for i, x in enumerate(box.sites):
        h[i, i] = 2.0 * d + params.lam * omega.site(x)
    for (x, y) in box.edges:
        val = -(1.0 + params.theta * omega.edge(x, y))
        i, j = box.index[x], box.index[y]
        h[i, j] = val
        h[j, i] = np.conj(val)
    return h


def _normalize_collection(box: LatticeBox, collection) -> list[tuple[Site, ...]]:
    if isinstance(collection, BoxDecomposition):
        cells = list(collection.cells)
    else:
        cells = [tuple(tuple(s) for s in cell) for cell in collection]
    seen: set[Site] = set()
    for cell in cells:
        cset = set(cell)
        if len(cset) != len(cell):
            raise DomainError("collection cell contains repeated sites")
        if cset & seen:
            raise DomainError("collection cells overlap")
        if not cset <= set(box.sites):
            raise DomainError("collection cell leaves the ambient box")
        seen |= cset
    return cells


def restrict_to_collection(box: LatticeBox, omega: DisorderSample, params: ModelParams,
                           collection) -> np.ndarray:
    """Block-diagonal Hamiltonian sum_Z P_Z h P_Z over a disjoint site collection.

    Rows and columns outside every cell are zero (the operator acts as 0 there).
    """
    cells = _normalize_collection(box, collection)
    h = build_hamiltonian(box, omega, params)
    out = np.zeros_like(h)
    for cell in cells:
        idx = box.site_indices(cell)
        out[np.ix_(idx, idx)] = h[np.ix_(idx, idx)]
    return out


def build_magnetic_hamiltonian(box: LatticeBox, omega: DisorderSample, params: ModelParams,
                               potential, t: float) -> np.ndarray:
    """Hamiltonian with every hopping multiplied by its Peierls phase at time t.

    ``potential(t, pos)`` maps a time and a continuum point (length-d array) to
    the vector potential one-form (length-d array). The line integral along
    each edge is evaluated with 8-point Gauss-Legendre quadrature in the
    segment parameter.
    """
    h = build_hamiltonian(box, omega, params)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    alphas = 0.5 * (nodes + 1.0)  # map [-1,1] -> [0,1]
    weights = 0.5 * weights
    for (x, y) in box.edges:
        xv, yv = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        step = yv - xv
        phase = 0.0
        for a, w in zip(alphas, weights):
            phase += w * float(np.dot(potential(t, a * yv + (1.0 - a) * xv), step))
        factor = np.exp(1j * phase)
        i, j = box.index[x], box.index[y]
        h[i, j] *= factor
        h[j, i] = np.conj(h[i, j])
    return h
