"""Determinant formulas for quasi-free expectations and the rate-function stack.

A gauge-invariant quasi-free state with symbol d assigns the exponential of a
bilinear the value det(1 + d (e^C - 1)); everything here--generating values,
their derivatives through the tilted symbol, characteristic functions, and
Legendre-Fenchel rate functions--reduces to that identity, which the test
suite pins against the brute-force Fock oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DomainError
from .spectral import (SpectralDecomposition, fermi_symbol, log_det_stable, logdet_hpd,
                       require_hermitian)

CONVEXITY_TOL = 1e-9
#: beta * spectral radius beyond which e^{beta h} would drown double precision
EXP_ARG_LIMIT = 300.0


def exp_bilinear_expectation(symbol: np.ndarray, matrix: np.ndarray) -> complex:
    """Expectation of e^{<A, C A>} in the quasi-free state with the given symbol.

    Computed as det(1 + d (e^C - 1)). For Hermitian C and a KMS symbol the
    result is positive real; a relative imaginary residue above 1e-9 raises.
    """
    d = np.asarray(symbol)
    c = np.asarray(matrix, dtype=complex)
    n = d.shape[0]
    if c.shape != (n, n):
        raise DomainError(f"symbol and matrix shapes differ: {d.shape} vs {c.shape}")
    hermitian_c = np.max(np.abs(c - c.conj().T)) <= 1e-12 * (1.0 + np.max(np.abs(c)))
    if hermitian_c:
        ec = SpectralDecomposition.of(c).apply(np.exp)
    else:
        import scipy.linalg

        ec = scipy.linalg.expm(c)
    value = np.exp(log_det_stable(np.eye(n) + d @ (ec - np.eye(n))))
    if hermitian_c and abs(value.imag) > 1e-9 * max(1.0, abs(value.real)):
        raise DomainError(
            f"expectation of a self-adjoint exponential came out complex: {value!r}")
    return complex(value)


class GeneratingEngine:
    """Generating values of a current operator in a restricted-Hamiltonian state.

    Caches the eigendecompositions of the state Hamiltonian and of the current
    matrix, so evaluating along an s-grid costs one small eigh per point.
    """

    def __init__(self, h_state: np.ndarray, current: np.ndarray, beta: float,
                 volume: int):
        if volume <= 0:
            raise DomainError("volume must be a positive integer")
        if beta < 0:
            raise DomainError("beta must be >= 0")
        self.beta = float(beta)
        self.volume = int(volume)
        from scipy.special import expit

        self.dec_h = SpectralDecomposition.of(h_state)
        self.dec_k = SpectralDecomposition.of(current)
        self.k = self.dec_k.apply(lambda x: x)
        self.symbol = self.dec_h.apply(lambda lam: expit(-beta * lam))
        self._sqrt_d = self.dec_h.apply(lambda lam: np.sqrt(expit(-beta * lam)))
        self._one_minus_d = np.eye(len(self.symbol)) - self.symbol
        self._beta_range = float(beta * np.max(np.abs(self.dec_h.eigenvalues))) \
            if len(self.dec_h.eigenvalues) else 0.0

    def _exp_sk(self, s: float) -> np.ndarray:
        return self.dec_k.apply(lambda lam: np.exp(s * lam))

    def value(self, s: float, check_identity: bool = True) -> float:
        """J(s) = (1/V) ln det(1 + d (e^{sK} - 1)) through a positive-definite form."""
        esk = self._exp_sk(s)
        core = self._one_minus_d + self._sqrt_d @ esk @ self._sqrt_d
        j = logdet_hpd(core) / self.volume
        if check_identity and self._beta_range < EXP_ARG_LIMIT:
            # same quantity as a ratio of determinants, a distinct code path
            half = self.dec_h.apply(lambda lam: np.exp(-0.5 * self.beta * lam))
            m1 = np.eye(len(esk)) + half @ esk @ half
            m0 = np.eye(len(esk)) + half @ half
            alt = (logdet_hpd(m1) - logdet_hpd(m0)) / self.volume
            if abs(alt - j) > 1e-10 * max(1.0, abs(j)):
                raise DomainError(
                    f"determinant identity violated: symbol form {j!r} vs ratio {alt!r}")
        return float(j)

    def tilted_symbol(self, s: float) -> np.ndarray:
        """Symbol of the s-tilted state, (1 + e^{-sK/2} e^{beta h} e^{-sK/2})^{-1}."""
        if self._beta_range >= EXP_ARG_LIMIT:
            raise DomainError(
                "beta * spectral radius too large for the tilted-symbol route")
        half_k = self.dec_k.apply(lambda lam: np.exp(-0.5 * s * lam))
        ebh = self.dec_h.apply(lambda lam: np.exp(self.beta * lam))
        m = require_hermitian(half_k @ ebh @ half_k)
        vals, vecs = np.linalg.eigh(m)
        return (vecs * (1.0 / (1.0 + vals))) @ vecs.conj().T

    def derivatives(self, s: float) -> tuple[float, float]:
        """(dJ/ds, d2J/ds2) from the tilted symbol; the second is >= 0."""
        ds = self.tilted_symbol(s)
        kd = self.k @ ds
        first = np.trace(kd).real / self.volume
        second = np.trace(self.k @ (np.eye(len(ds)) - ds) @ kd).real / self.volume
        return float(first), float(second)


def generating_value(h_state, current, beta, s, volume) -> float:
    return GeneratingEngine(h_state, current, beta, volume).value(s)


def generating_derivatives(h_state, current, beta, s, volume) -> tuple[float, float]:
    return GeneratingEngine(h_state, current, beta, volume).derivatives(s)


@dataclass(frozen=True)
class GeneratingCurve:
    """Sampled s -> J(sE) with its formula derivatives and provenance."""

    s_grid: np.ndarray
    values: np.ndarray
    first_derivative: np.ndarray
    second_derivative: np.ndarray
    volume: int
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        if np.any(np.diff(s) <= 0):
            raise DomainError("s grid must be strictly increasing")
        if len(s) >= 3:
            dd = np.diff(self.values, 2)
            h2 = np.diff(s)[:-1] * np.diff(s)[1:]
            if np.min(dd / h2) < -CONVEXITY_TOL:
                raise DomainError(
                    f"generating curve is not convex: min scaled second difference "
                    f"{np.min(dd / h2):.3e}")

    @property
    def zero_index(self) -> int:
        i = int(np.argmin(np.abs(self.s_grid)))
        if abs(self.s_grid[i]) > 1e-12:
            raise DomainError("s grid must contain s = 0")
        return i

    @property
    def macroscopic_current(self) -> float:
        """dJ/ds at s = 0, the point the rate function vanishes at."""
        return float(self.first_derivative[self.zero_index])


def generating_curve(h_state, current, beta, s_grid, volume,
                     provenance=None) -> GeneratingCurve:
    """Evaluate J, dJ, d2J on an s-grid (must contain 0) in one engine pass."""
    engine = GeneratingEngine(h_state, current, beta, volume)
    s_grid = np.asarray(s_grid, dtype=float)
    values = np.array([engine.value(s) for s in s_grid])
    pairs = [engine.derivatives(s) for s in s_grid]
    first = np.array([p[0] for p in pairs])
    second = np.array([p[1] for p in pairs])
    curve = GeneratingCurve(s_grid=s_grid, values=values, first_derivative=first,
                            second_derivative=second, volume=int(volume),
                            provenance=provenance or {})
    curve.zero_index  # noqa: B018 - validates that 0 is on the grid
    return curve


@dataclass(frozen=True)
class RateFunction:
    """Legendre-Fenchel conjugate of a generating curve on an x-grid."""

    x_grid: np.ndarray
    values: np.ndarray
    minimizer: float
    x_minus: float
    x_plus: float


def legendre_rate(curve: GeneratingCurve, x_grid=None) -> RateFunction:
    """Conjugate I(x) = sup_s (s x - J(s)) of a sampled convex curve.

    With no x-grid the conjugate is evaluated parametrically at x = dJ(s) for
    every grid s, where the supremum is attained exactly at that s. On an
    explicit grid the supremum is taken over the sampled points with the
    monotone-argmax sweep, and x outside [dJ(s_min), dJ(s_max)] maps to +inf.
    """
    s = np.asarray(curve.s_grid, dtype=float)
    j = np.asarray(curve.values, dtype=float)
    dj = np.asarray(curve.first_derivative, dtype=float)
    if np.any(np.diff(dj) < -1e-10):
        raise DomainError("first derivative of a convex curve must be non-decreasing")
    x_minus, x_plus = float(dj[0]), float(dj[-1])
    minimizer = curve.macroscopic_current
    if x_grid is None:
        order = np.argsort(dj, kind="stable")
        x = dj[order]
        values = (s * dj - j)[order]
        return RateFunction(x_grid=x, values=np.maximum(values, 0.0),
                            minimizer=minimizer, x_minus=x_minus, x_plus=x_plus)
    x = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise DomainError("x grid must be strictly increasing")
    values = np.full(len(x), np.inf)
    inside = (x >= x_minus - 1e-12) & (x <= x_plus + 1e-12)
    ptr = 0
    for idx in np.nonzero(inside)[0]:
        xi = x[idx]
        while ptr + 1 < len(s) and s[ptr + 1] * xi - j[ptr + 1] >= s[ptr] * xi - j[ptr]:
            ptr += 1
        values[idx] = max(s[ptr] * xi - j[ptr], 0.0)
    return RateFunction(x_grid=x, values=values, minimizer=minimizer,
                        x_minus=x_minus, x_plus=x_plus)


def conjugate_back(rate: RateFunction, s_grid) -> np.ndarray:
    """Double conjugate sup_x (s x - I(x)) on the finite part of the rate grid."""
    finite = np.isfinite(rate.values)
    x = rate.x_grid[finite]
    i_vals = rate.values[finite]
    out = np.empty(len(s_grid))
    for n, s in enumerate(np.asarray(s_grid, dtype=float)):
        out[n] = np.max(s * x - i_vals)
    return out


@dataclass(frozen=True)
class DistributionEstimate:
    """Distribution data for a current observable in a quasi-free state.

    ``phi`` samples the characteristic function of the extensive observable
    (the bilinear of the current matrix); atoms, when present, give its exact
    spectral measure with support rescaled by the volume to density units.
    """

    u_grid: np.ndarray
    phi: np.ndarray
    volume: int
    atoms_x: np.ndarray | None = None
    atom_weights: np.ndarray | None = None


def characteristic_function(symbol: np.ndarray, current: np.ndarray, volume: int,
                            u_grid, include_atoms: str = "auto") -> DistributionEstimate:
    """phi(u) = det(1 + d (e^{iuK} - 1)) on a grid, plus exact atoms at oracle scale.

    include_atoms: "auto" adds the Fock-space spectral measure whenever the
    mode count allows it, "never" skips it, "require" raises if impossible.
    """
    from .fock import (MAX_MODES, build_car_generators, bilinear_to_fock, fock_expm,
                       observable_distribution)

    d = np.asarray(symbol)
    dec_k = SpectralDecomposition.of(current)
    n = d.shape[0]
    u_grid = np.asarray(u_grid, dtype=float)
    phi = np.empty(len(u_grid), dtype=complex)
    eye = np.eye(n)
    for i, u in enumerate(u_grid):
        euk = dec_k.apply(lambda lam: np.exp(1j * u * lam))
        phi[i] = np.exp(log_det_stable(eye + d @ (euk - eye)))
    if np.any(np.abs(phi) > 1.0 + 1e-9):
        raise DomainError("characteristic function left the unit disc")

    atoms_x = atom_weights = None
    if include_atoms == "require" and n > MAX_MODES:
        raise DomainError(f"atoms requested but {n} modes exceed the oracle cap")
    if include_atoms in ("auto", "require") and n <= MAX_MODES:
        vals = np.linalg.eigvalsh(require_hermitian(d))
        if vals.min() <= 0.0 or vals.max() >= 1.0:
            if include_atoms == "require":
                raise DomainError("symbol spectrum must lie strictly inside (0, 1)")
        else:
            gens = build_car_generators(n)
            log_weight = SpectralDecomposition.of(d).apply(
                lambda lam: np.log(lam / (1.0 - lam)))
            weight = fock_expm(bilinear_to_fock(log_weight, gens))
            obs = bilinear_to_fock(np.asarray(current), gens)
            support, weights = observable_distribution(weight, obs)
            atoms_x = support / volume
            atom_weights = weights
    return DistributionEstimate(u_grid=u_grid, phi=phi, volume=int(volume),
                                atoms_x=atoms_x, atom_weights=atom_weights)


def tail_logprob(dist: DistributionEstimate | None, interval: tuple[float, float],
                 volume: int, curve: GeneratingCurve | None = None) -> float:
    """(1/V) ln m(O) for an open interval O of current densities.

    Exact from atoms when available; otherwise the one-sided Chernoff upper
    bound inf_{s >= 0} (J(s) - s inf O) from a generating curve. Empty atomic
    mass returns -inf.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise DomainError("interval must satisfy a < b")
    if dist is not None and dist.atoms_x is not None:
        mask = (dist.atoms_x > a) & (dist.atoms_x < b)
        mass = float(dist.atom_weights[mask].sum())
        if mass <= 0.0:
            return float("-inf")
        return float(np.log(mass) / volume)
    if curve is None:
        raise DomainError("need either an atomic estimate or a generating curve")
    if not np.isfinite(a):
        raise DomainError("the one-sided Chernoff bound needs a finite lower endpoint")
    nonneg = curve.s_grid >= 0.0
    return float(np.min(curve.values[nonneg] - curve.s_grid[nonneg] * a))
