"""Brute-force Fock-space realization of the fermionic algebra for few modes.

The 2^n-dimensional sign-string construction is the package's ground truth:
every determinant shortcut in the quasi-free engine must reproduce, at small
sizes, what these dense matrices say. Nothing here aims to be fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, ResourceError, SingularityError

MAX_MODES = 10

_SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])  # |vacuum><occupied|
_ID2 = np.eye(2)


@dataclass(frozen=True)
class FockOperator:
    """Dense 2^n x 2^n matrix with its mode count and a debugging label."""

    n_modes: int
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        dim = 2 ** self.n_modes
        if self.matrix.shape != (dim, dim):
            raise DomainError(
                f"matrix shape {self.matrix.shape} does not match {self.n_modes} modes")


def _kron_chain(factors) -> np.ndarray:
    out = np.array([[1.0]])
    for f in factors:
        out = np.kron(out, f)
    return out


def build_car_generators(n: int) -> list[tuple[FockOperator, FockOperator]]:
    """Annihilation/creation pairs (a_i, a_i^dagger) satisfying the CAR exactly.

    Mode i carries a sign string over modes j < i, so anticommutators come out
    entrywise exact in floating point.
    """
    if not 1 <= n <= MAX_MODES:
        raise ResourceError(f"mode count {n} outside 1..{MAX_MODES}")
    pairs = []
    for i in range(n):
        factors = [_SIGMA_Z] * i + [_LOWER] + [_ID2] * (n - i - 1)
        a = _kron_chain(factors).astype(complex)
        pairs.append((FockOperator(n, a, f"a_{i}"), FockOperator(n, a.conj().T, f"adag_{i}")))
    return pairs


def annihilator(generators, psi: np.ndarray) -> np.ndarray:
    """a(psi) = sum_i conj(psi_i) a_i (antilinear in psi)."""
    psi = np.asarray(psi, dtype=complex)
    n = len(generators)
    if psi.shape != (n,):
        raise DomainError(f"vector of length {psi.shape} does not match {n} modes")
    out = np.zeros_like(generators[0][0].matrix)
    for i, (a, _) in enumerate(generators):
        out += np.conj(psi[i]) * a.matrix
    return out


def bilinear_to_fock(c: np.ndarray, generators) -> FockOperator:
    """Second quantization sum_ij C_ij adag_i a_j of a one-particle matrix."""
    c = np.asarray(c, dtype=complex)
    n = len(generators)
    if c.shape != (n, n):
        raise DomainError(f"matrix shape {c.shape} does not match {n} modes")
    dim = 2 ** n
    out = np.zeros((dim, dim), dtype=complex)
    for i in range(n):
        adag = generators[i][1].matrix
        for j in range(n):
            if c[i, j] != 0.0:
                out += c[i, j] * (adag @ generators[j][0].matrix)
    return FockOperator(n, out, "bilinear")


def fock_expm(x: FockOperator) -> FockOperator:
    """Matrix exponential: spectral for (anti-)Hermitian input, Pade-13 otherwise."""
    m = x.matrix
    scale = 1.0 + np.max(np.abs(m))
    if np.max(np.abs(m - m.conj().T)) < 1e-12 * scale:
        vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
        em = (vecs * np.exp(vals)) @ vecs.conj().T
    elif np.max(np.abs(m + m.conj().T)) < 1e-12 * scale:
        vals, vecs = np.linalg.eigh(0.5j * (m - m.conj().T))  # m = -i * hermitian
        em = (vecs * np.exp(-1j * vals)) @ vecs.conj().T
    else:
        em = scipy.linalg.expm(m)
    return FockOperator(x.n_modes, em, f"exp({x.label})")


def normalized_trace(x: FockOperator) -> complex:
    """Tracial-state value 2^{-n} Tr X."""
    return complex(np.trace(x.matrix)) / (2 ** x.n_modes)


def fock_trace_state(weight: FockOperator, x: FockOperator) -> complex:
    """Expectation tr(X W) / tr(W) for a positive weight W."""
    if weight.n_modes != x.n_modes:
        raise DomainError("weight and observable have different mode counts")
    z = np.trace(weight.matrix)
    if abs(z) < 1e-300:
        raise SingularityError("state weight has zero trace")
    return complex(np.trace(x.matrix @ weight.matrix) / z)


def thermal_weight(h: np.ndarray, beta: float, generators) -> FockOperator:
    """Gibbs weight e^{-beta <A, h A>} for a Hermitian one-particle matrix."""
    return fock_expm(bilinear_to_fock(-beta * np.asarray(h), generators))


def two_point_matrix(weight: FockOperator, generators) -> np.ndarray:
    """Matrix D with D_{yx} = <adag(e_x) a(e_y)> in the given state."""
    n = len(generators)
    out = np.zeros((n, n), dtype=complex)
    for x in range(n):
        adag = generators[x][1].matrix
        for y in range(n):
            out[y, x] = fock_trace_state(weight, FockOperator(n, adag @ generators[y][0].matrix))
    return out


def heisenberg_evolve(x: FockOperator, h: np.ndarray, t: float, generators) -> FockOperator:
    """tau_t(X) = e^{it<A,hA>} X e^{-it<A,hA>}."""
    hf = bilinear_to_fock(np.asarray(h), generators)
    vals, vecs = np.linalg.eigh(0.5 * (hf.matrix + hf.matrix.conj().T))
    u = (vecs * np.exp(1j * t * vals)) @ vecs.conj().T
    return FockOperator(x.n_modes, u @ x.matrix @ u.conj().T, f"tau_{t}({x.label})")


def observable_distribution(weight: FockOperator, obs: FockOperator):
    """Atomic spectral measure of a self-adjoint observable in a state.

    Returns (support, weights): the eigenvalues of the observable and the
    state's mass on each eigenvector.
    """
    m = obs.matrix
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = weight.matrix
    probs = np.real(np.einsum("ij,jk,ki->i", vecs.conj().T, w, vecs))
    total = probs.sum()
    if total <= 0:
        raise SingularityError("state weight has non-positive trace")
    return vals, probs / total


def _operator_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


def _bogoliubov_rhs(h_alpha: np.ndarray, dh: np.ndarray, generators,
                    u_grid: np.ndarray) -> float:
    """max_u || e^{u H_alpha} dH e^{-u H_alpha} || over the grid, exactly per u.

    The conjugated bilinear stays bilinear with one-particle matrix
    e^{u h_alpha} dh e^{-u h_alpha}, so each norm is a small Fock-space norm.
    """
    best = 0.0
    for u in u_grid:
        eu = scipy.linalg.expm(u * h_alpha)
        eum = scipy.linalg.expm(-u * h_alpha)
        conj = bilinear_to_fock(eu @ dh @ eum, generators)
        best = max(best, _operator_norm(conj.matrix))
    return best


def verify_identities_suite(h: np.ndarray, k: np.ndarray, beta: float, s: float,
                            rng=None) -> dict:
    """Measured violations of the trace-inequality and product-identity toolkit.

    Returns a report dict with, per check, the largest observed violation (or
    the measured constant). All inputs are one-particle matrices with at most
    MAX_MODES rows.
    """
    h = np.asarray(h, dtype=complex)
    k = np.asarray(k, dtype=complex)
    n = h.shape[0]
    if n > MAX_MODES:
        raise ResourceError(f"{n} modes above the oracle cap {MAX_MODES}")
    rng = np.random.default_rng(0) if rng is None else rng
    gens = build_car_generators(n)
    report: dict = {"n_modes": n}

    weight = thermal_weight(h, beta, gens)
    alpha_grid = np.linspace(0.0, 1.0, 9)
    u_grid = np.linspace(-0.5, 0.5, 9)

    # trace inequality, derivative form: family H_alpha = H0 + alpha dH
    h0 = 0.5 * (k + k.conj().T)
    dh = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    dh = 0.5 * (dh + dh.conj().T)
    alpha0 = 0.5
    eps = 1e-4

    def log_tr(a):
        x = fock_expm(bilinear_to_fock(h0 + a * dh, gens))
        return np.log(np.real(np.trace(weight.matrix @ x.matrix)))

    deriv = (log_tr(alpha0 + eps) - log_tr(alpha0 - eps)) / (2 * eps)
    rhs = _bogoliubov_rhs(h0 + alpha0 * dh, dh, gens, u_grid)
    report["bogoliubov_derivative_violation"] = max(0.0, abs(deriv) - rhs)

    # trace inequality, two-endpoint form
    lhs = abs(log_tr(1.0) - log_tr(0.0))
    rhs = max(
        _bogoliubov_rhs(h0 + a * dh, dh, gens, u_grid) for a in alpha_grid
    )
    report["bogoliubov_difference_violation"] = max(0.0, lhs - rhs)

    # product of exponentials of bilinears: measure the scalar defect D
    c1 = 0.5 * (h + h.conj().T)
    c2 = 0.5 * s * (k + k.conj().T)
    m = scipy.linalg.expm(c2) @ scipy.linalg.expm(c1) @ scipy.linalg.expm(c2)
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    c = (vecs * np.log(vals)) @ vecs.conj().T
    lhs_op = (fock_expm(bilinear_to_fock(c2, gens)).matrix
              @ fock_expm(bilinear_to_fock(c1, gens)).matrix
              @ fock_expm(bilinear_to_fock(c2, gens)).matrix)
    rhs_op = fock_expm(bilinear_to_fock(c, gens)).matrix
    ratio = np.trace(lhs_op) / np.trace(rhs_op)
    report["product_identity_D"] = float(np.abs(np.log(ratio)))
    report["product_identity_residual"] = float(
        np.max(np.abs(lhs_op - ratio * rhs_op)) / max(1.0, np.max(np.abs(lhs_op))))

    # equilibrium continuity: sum of neighbor current expectations vanishes
    from .spectral import fermi_symbol  # local import to avoid a cycle

    d_eq = fermi_symbol(h, beta)
    worst = 0.0
    for x in range(n):
        total = 0.0
        for y in range(n):
            if y != x and h[x, y] != 0.0:
                total += -2.0 * np.imag(h[x, y] * d_eq[y, x])
        worst = max(worst, abs(total))
    report["equilibrium_continuity_residual"] = worst
    return report
