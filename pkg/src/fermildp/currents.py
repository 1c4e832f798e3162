"""Electric-field profiles, current matrices, and the field-integrated operator.

The central object is the Hermitian one-particle matrix assembled from a field
profile and two site collections: its bilinear second quantization is the
volume-scaled current-density observable whose exponential moments the
quasi-free engine evaluates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .errors import AccuracyError, ConfigError, DomainError
from .lattice import (LatticeBox, ModelParams, DisorderSample, _normalize_collection,
                      hopping_entry, restrict_to_collection)
from .spectral import SpectralDecomposition, fermi_symbol

PROFILE_TAGS = ("smooth-bump", "half-sine", "square-ramp")


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre density and the stability-doubling policy."""

    nodes_per_unit: int = 16
    stability_check: bool = True
    tol: float = 1e-8
    max_doublings: int = 3


def gauss_panels(a: float, b: float, density: int, breakpoints=()) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [a, b], split at breakpoints and unit panels."""
    if b <= a:
        return np.empty(0), np.empty(0)
    cuts = sorted({a, b, *(p for p in breakpoints if a < p < b)})
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n_sub = max(1, math.ceil(hi - lo))
        edges = np.linspace(lo, hi, n_sub + 1)
        for p0, p1 in zip(edges[:-1], edges[1:]):
            m = max(2, math.ceil(density * (p1 - p0)))
            x, w = np.polynomial.legendre.leggauss(m)
            nodes.append(0.5 * (p1 - p0) * x + 0.5 * (p0 + p1))
            weights.append(0.5 * (p1 - p0) * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class FieldProfile:
    """Compactly supported electric field E(alpha) = amplitude * e(alpha) * w.

    The scalar shape e lives on [-T, 0] before shifting; a shift t replaces
    E by E_t(alpha) = E(alpha + t). "sampled" profiles interpolate stored
    (alpha, value) pairs linearly.
    """

    tag: str
    duration: float
    direction: tuple[float, ...]
    amplitude: float = 1.0
    shift: float = 0.0
    samples: tuple[tuple[float, float], ...] = ()
    nodes_per_unit: int = 16

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError(f"support length must be positive, got {self.duration}")
        if self.tag not in PROFILE_TAGS + ("sampled",):
            raise ConfigError(f"unknown field profile tag {self.tag!r}")
        w = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ConfigError("direction must be a unit vector")

    @property
    def dimension(self) -> int:
        return len(self.direction)

    @property
    def support(self) -> tuple[float, float]:
        return (-self.duration - self.shift, -self.shift)

    def breakpoints(self) -> tuple[float, ...]:
        t0, t1 = self.support
        if self.tag == "square-ramp":
            quarter = 0.25 * self.duration
            return (t0, t0 + quarter, t1 - quarter, t1)
        if self.tag == "sampled":
            return tuple(a - self.shift for a, _ in self.samples)
        return (t0, t1)

    def scalar(self, alpha) -> np.ndarray:
        """Shape function e(alpha + shift) times the amplitude."""
        a = np.asarray(alpha, dtype=float) + self.shift
        t = self.duration
        inside = (a >= -t) & (a <= 0.0)
        out = np.zeros_like(a, dtype=float)
        if self.tag == "half-sine":
            out[inside] = np.sin(np.pi * (a[inside] + t) / t)
        elif self.tag == "smooth-bump":
            u = (2.0 * a[inside] + t) / t
            core = np.zeros_like(u)
            strict = np.abs(u) < 1.0
            core[strict] = np.exp(1.0 - 1.0 / (1.0 - u[strict] ** 2))
            out[inside] = core
        elif self.tag == "square-ramp":
            u = a[inside]
            q = 0.25 * t
            out[inside] = np.minimum(1.0, np.minimum((u + t) / q, -u / q))
            out[inside] = np.maximum(out[inside], 0.0)
        else:  # sampled
            xs = np.array([p for p, _ in self.samples])
            ys = np.array([v for _, v in self.samples])
            out[inside] = np.interp(a[inside], xs, ys, left=0.0, right=0.0)
        return self.amplitude * out

    def component(self, alpha, q: int) -> np.ndarray:
        return self.direction[q] * self.scalar(alpha)

    def scalar_integral(self, density: int | None = None) -> float:
        """Integral of amplitude * e over its support."""
        nodes, weights = gauss_panels(*self.support, density or self.nodes_per_unit,
                                      self.breakpoints())
        return float(weights @ self.scalar(nodes))

    def shifted(self, t: float) -> "FieldProfile":
        return replace(self, shift=self.shift + t)

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "duration": self.duration,
            "direction": list(self.direction),
            "amplitude": self.amplitude,
            "shift": self.shift,
            "samples": [list(p) for p in self.samples],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FieldProfile":
        return cls(tag=doc["tag"], duration=doc["duration"],
                   direction=tuple(doc["direction"]), amplitude=doc.get("amplitude", 1.0),
                   shift=doc.get("shift", 0.0),
                   samples=tuple(tuple(p) for p in doc.get("samples", ())))


def field_profiles(tag: str, duration: float, direction, amplitude: float = 1.0) -> FieldProfile:
    """Closed-form profile factory; see PROFILE_TAGS for the available shapes."""
    if tag not in PROFILE_TAGS:
        raise ConfigError(f"unknown field profile tag {tag!r}; expected one of {PROFILE_TAGS}")
    return FieldProfile(tag=tag, duration=duration, direction=tuple(direction),
                        amplitude=amplitude)


def _im(m: np.ndarray) -> np.ndarray:
    return (m - m.conj().T) / 2j


def _re(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2.0


def single_hopping(box: LatticeBox, omega: DisorderSample, params: ModelParams,
                   x, y) -> np.ndarray:
    """Rank-one matrix <e_x, Delta e_y> |e_x><e_y| (zero if the entry vanishes)."""
    x, y = tuple(x), tuple(y)
    if x not in box or y not in box:
        raise DomainError(f"sites {x}, {y} must lie in the box")
    dist2 = sum((a - b) ** 2 for a, b in zip(x, y))
    if dist2 > 1:
        raise DomainError("single-hopping sites must coincide or be nearest neighbors")
    out = np.zeros((box.n_sites, box.n_sites), dtype=complex)
    out[box.index[x], box.index[y]] = hopping_entry(omega, params, x, y)
    return out


def _directional_sums(box: LatticeBox, omega: DisorderSample, params: ModelParams,
                      cell: tuple, which: str) -> list[np.ndarray]:
    """Per direction k: sum over x with x, x+e_k in the cell of Im/Re S_{x+e_k, x}."""
    n, d = box.n_sites, box.dimension
    cell_set = set(cell)
    out = []
    for k in range(d):
        m = np.zeros((n, n), dtype=complex)
        for x in cell:
            y = x[:k] + (x[k] + 1,) + x[k + 1:]
            if y in cell_set:
                m[box.index[y], box.index[x]] += hopping_entry(omega, params, y, x)
        out.append(_im(m) if which == "im" else _re(m))
    return out


@dataclass(frozen=True)
class CurrentOperator:
    """Hermitian field-integrated current matrix with its assembly provenance."""

    matrix: np.ndarray
    provenance: dict = dc_field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _phase_integral(span: float, dl: np.ndarray) -> np.ndarray:
    """Entrywise int_0^span e^{i s dl} ds = span e^{i span dl / 2} sinc(span dl / 2pi)."""
    half = 0.5 * span * dl
    return span * np.exp(1j * half) * np.sinc(half / np.pi)


def _assemble_once(box, omega, params, field_profile, support_cells, dec,
                   density: int) -> np.ndarray:
    """One pass of the composite Gauss-Legendre assembly at the given density.

    The inner propagation integral is elementary in the dynamics eigenbasis and
    is taken in closed form; only the field integral is sampled.
    """
    n, d = box.n_sites, box.dimension
    w = np.asarray(field_profile.direction, dtype=float)
    lam, u = dec.eigenvalues, dec.eigenvectors
    dl = lam[None, :] - lam[:, None]

    lo, hi = field_profile.support
    hi = min(hi, 0.0)
    kernel = np.zeros((n, n), dtype=complex)
    if hi > lo:
        a_nodes, a_weights = gauss_panels(lo, hi, density, field_profile.breakpoints())
        e_vals = field_profile.scalar(a_nodes)
        # forward-evolved commutator kernel: the propagated factor is
        # e^{+ish} Im S e^{-ish}, the direction the response expansion fixes
        for a, wa, ea in zip(a_nodes, a_weights, e_vals):
            if ea == 0.0:
                continue
            kernel += (wa * ea) * _phase_integral(-a, -dl)

    total = np.zeros((n, n), dtype=complex)
    int_e = field_profile.scalar_integral(density)
    for cell in support_cells:
        im_sums = _directional_sums(box, omega, params, cell, "im")
        re_sums = _directional_sums(box, omega, params, cell, "re")
        weighted_im = sum(w[k] * im_sums[k] for k in range(d))
        evolved = np.zeros((n, n), dtype=complex)
        for q in range(d):
            if w[q] == 0.0:
                continue
            b = u.conj().T @ im_sums[q] @ u
            evolved += w[q] * (u @ (kernel * b) @ u.conj().T)
        total += 4.0 * 1j * (evolved @ weighted_im - weighted_im @ evolved)
        total += 2.0 * int_e * sum(w[k] ** 2 * re_sums[k] for k in range(d))
    return 0.5 * (total + total.conj().T)


def assemble_current_operator(box: LatticeBox, omega: DisorderSample, params: ModelParams,
                              field_profile: FieldProfile, support_collection,
                              dynamics_collection, quad: QuadratureSpec = QuadratureSpec(),
                              ) -> CurrentOperator:
    """Field-integrated current matrix over a support collection.

    The paramagnetic part propagates single-direction hopping sums with the
    Hamiltonian restricted to the dynamics collection and accumulates the
    nested time integral against the field; the diamagnetic part adds the
    field-integral-weighted real hopping sums. The result is Hermitian, linear
    in the field, and zero for a zero field.
    """
    if field_profile.dimension != box.dimension:
        raise ConfigError("field profile dimension does not match the box")
    support_cells = _normalize_collection(box, support_collection)
    h_tau = restrict_to_collection(box, omega, params, dynamics_collection)
    dec = SpectralDecomposition.of(h_tau)

    density = quad.nodes_per_unit
    k_prev = _assemble_once(box, omega, params, field_profile, support_cells, dec, density)
    report = {"nodes_per_unit": density, "doublings": 0, "delta": None}
    if quad.stability_check:
        for _ in range(quad.max_doublings):
            density *= 2
            k_next = _assemble_once(box, omega, params, field_profile, support_cells, dec,
                                    density)
            delta = float(np.max(np.abs(k_next - k_prev))) if k_prev.size else 0.0
            report = {"nodes_per_unit": density, "doublings": report["doublings"] + 1,
                      "delta": delta}
            k_prev = k_next
            if delta <= quad.tol:
                break
        else:
            raise AccuracyError(
                f"current-operator quadrature did not stabilize (delta {report['delta']:.3e})",
                report=report)
    dynamics_cells = _normalize_collection(box, dynamics_collection)
    provenance = {
        "seed": omega.seed, "mode": omega.mode,
        "lam": params.lam, "theta": params.theta, "beta": params.beta,
        "field": field_profile.to_json(),
        "support_cells": [[list(s) for s in cell] for cell in support_cells],
        "dynamics_cells": [[list(s) for s in cell] for cell in dynamics_cells],
        "quadrature": report,
    }
    return CurrentOperator(matrix=k_prev, provenance=provenance)


class ConductivityEvaluator:
    """Space-averaged transport-coefficient expectations for one realization.

    Caches the spectral data of the box Hamiltonian so repeated evaluation at
    many times (as in response convolutions) stays cheap.
    """

    def __init__(self, box: LatticeBox, omega: DisorderSample, params: ModelParams,
                 nodes_per_unit: int = 16):
        if params.beta <= 0:
            raise DomainError("conductivity expectations need beta > 0")
        from .lattice import build_hamiltonian

        self.box = box
        self.nodes_per_unit = nodes_per_unit
        h = build_hamiltonian(box, omega, params)
        self.dec = SpectralDecomposition.of(h)
        self.symbol = fermi_symbol(h, params.beta)
        whole = (tuple(box.sites),)
        self._im_sums = _directional_sums(box, omega, params, whole[0], "im")
        self._re_sums = _directional_sums(box, omega, params, whole[0], "re")
        self._b = [self.dec.eigenvectors.conj().T @ p @ self.dec.eigenvectors
                   for p in self._im_sums]

    def at(self, t: float) -> np.ndarray:
        """Expectation of the d x d conductivity observable matrix at time t."""
        d = self.box.dimension
        n = self.box.n_sites
        lam, u = self.dec.eigenvalues, self.dec.eigenvectors
        dl = lam[None, :] - lam[:, None]
        # forward-evolved kernel int_0^t e^{-i alpha dl} d alpha (any sign of t)
        kernel = _phase_integral(t, -dl)
        out = np.zeros((d, d))
        for q in range(d):
            evolved = u @ (kernel * self._b[q]) @ u.conj().T
            for k in range(d):
                comm = evolved @ self._im_sums[k] - self._im_sums[k] @ evolved
                para = 4.0 * 1j * np.trace(comm @ self.symbol)
                dia = 2.0 * np.trace(self._re_sums[k] @ self.symbol) if k == q else 0.0
                val = (para + dia) / n
                if abs(val.imag) > 1e-10 * (1.0 + abs(val.real)):
                    raise AccuracyError(
                        f"conductivity expectation has imaginary residue {val.imag:.3e}")
                out[k, q] = val.real
        return out


def conductivity_expectation(box: LatticeBox, omega: DisorderSample, params: ModelParams,
                             t: float, nodes_per_unit: int = 16) -> np.ndarray:
    """KMS expectation of the conductivity observable matrix at time t."""
    return ConductivityEvaluator(box, omega, params, nodes_per_unit).at(t)
