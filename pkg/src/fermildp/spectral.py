"""Dense Hermitian spectral calculus and Combes-Thomas decay constants.

Everything here is plain LAPACK work behind exact contracts: eigendecompose
once, apply scalar functions to the spectrum, and check the locality bounds
that the decay estimates promise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import DomainError, SingularityError
from .lattice import LatticeBox, ModelParams

HERMITICITY_RTOL = 1e-10


def require_hermitian(h: np.ndarray) -> np.ndarray:
    """Symmetrize after checking the asymmetry is roundoff-sized."""
    h = np.asarray(h)
    scale = 1.0 + np.max(np.abs(h)) if h.size else 1.0
    asym = np.max(np.abs(h - h.conj().T)) if h.size else 0.0
    if asym > HERMITICITY_RTOL * scale:
        raise DomainError(f"matrix is not Hermitian: max asymmetry {asym:.3e}")
    return 0.5 * (h + h.conj().T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and the unitary diagonalizing a Hermitian matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def of(cls, h: np.ndarray) -> "SpectralDecomposition":
        vals, vecs = np.linalg.eigh(require_hermitian(h))
        return cls(vals, vecs)

    def apply(self, f) -> np.ndarray:
        """U f(lambda) U^dagger."""
        fv = np.asarray(f(self.eigenvalues))
        return (self.eigenvectors * fv) @ self.eigenvectors.conj().T


def fermi_symbol(h: np.ndarray, beta: float) -> np.ndarray:
    """Equilibrium symbol (1 + e^{beta h})^{-1}; beta = 0 gives the tracial 1/2.

    Evaluated through the logistic function on the spectrum, which saturates
    smoothly instead of overflowing for large beta.
    """
    if beta < 0:
        raise DomainError("beta must be >= 0")
    dec = SpectralDecomposition.of(h)
    return dec.apply(lambda lam: expit(-beta * lam))


def propagator(h: np.ndarray, t: float) -> np.ndarray:
    """Unitary e^{i t h} by spectral calculus."""
    dec = SpectralDecomposition.of(h)
    return dec.apply(lambda lam: np.exp(1j * t * lam))


def schur_norm_bound(c: np.ndarray) -> float:
    """Row-sum upper bound sup_x sum_y |C_xy| on the operator norm."""
    c = np.atleast_2d(np.asarray(c))
    return float(np.abs(c).sum(axis=1).max())


def site_distances(box: LatticeBox) -> np.ndarray:
    """Euclidean distances |x - y| between all pairs of box sites."""
    coords = np.asarray(box.sites, dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


@dataclass(frozen=True)
class CTConstants:
    """Weighted row-sum constants controlling Combes-Thomas decay rates."""

    mu: float
    eta: float
    s0: float
    s: float
    mu_eta: float


def ct_constants(h: np.ndarray, box: LatticeBox, mu: float, eta: float,
                 params: ModelParams) -> CTConstants:
    """Decay constants of h on the box, plus the model decay rate mu_eta.

    s0 = sup_x sum_y e^{mu|x-y|} |h_xy| and s replaces the weight by
    (e^{mu|x-y|} - 1); mu_eta = mu * min(1/2, eta / (8 d (1+theta) e^mu)) is
    the rate entering the propagator bound for the tight-binding model.
    """
    if mu < 0:
        raise DomainError("mu must be >= 0")
    dist = site_distances(box)
    amps = np.abs(np.asarray(h))
    s0 = float((np.exp(mu * dist) * amps).sum(axis=1).max()) if amps.size else 0.0
    s = float(((np.exp(mu * dist) - 1.0) * amps).sum(axis=1).max()) if amps.size else 0.0
    d = box.dimension
    mu_eta = mu * min(0.5, eta / (8.0 * d * (1.0 + params.theta) * np.exp(mu)))
    return CTConstants(mu=mu, eta=eta, s0=s0, s=s, mu_eta=mu_eta)


def resolvent_decay_bound(ct: CTConstants, gap: float, dist: np.ndarray) -> np.ndarray:
    """Pointwise bound e^{-mu|x-y|} / (gap - s); requires gap > s."""
    if gap <= ct.s:
        raise DomainError("resolvent bound needs distance-to-spectrum > s(h, mu)")
    return np.exp(-ct.mu * dist) / (gap - ct.s)


def propagator_decay_bound(ct: CTConstants, t: float, dist: np.ndarray) -> np.ndarray:
    """Pointwise model bound 36 e^{|t eta| - 2 mu_eta |x-y|} on |e^{ith}_{xy}|."""
    return 36.0 * np.exp(abs(t * ct.eta) - 2.0 * ct.mu_eta * dist)


def two_symbol_decay_bound(h1: np.ndarray, h2: np.ndarray, box: LatticeBox, mu: float,
                           params: ModelParams) -> np.ndarray:
    """Pointwise bound 2 exp(-(mu/2) e^{-s0(h1)-2 s0(h2)} |x-y|).

    Controls the entries of (1 + e^{h2} e^{h1} e^{h2})^{-1}; every individual
    mu gives a valid bound.
    """
    c1 = ct_constants(h1, box, mu, 1.0, params)
    c2 = ct_constants(h2, box, mu, 1.0, params)
    rate = 0.5 * mu * np.exp(-c1.s0 - 2.0 * c2.s0)
    return 2.0 * np.exp(-rate * site_distances(box))


def log_det_stable(m: np.ndarray, min_pivot: float = 1e-300) -> complex:
    """ln det of a complex square matrix via pivoted LU.

    Log-magnitudes and phases accumulate separately, so the value stays finite
    where the determinant itself would over- or underflow. The imaginary part
    is only meaningful modulo 2 pi.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    diag = np.diagonal(lu)
    smallest = float(np.abs(diag).min()) if diag.size else 1.0
    if smallest < min_pivot or not np.all(np.isfinite(diag)):
        raise SingularityError(
            f"matrix is singular to working precision (smallest pivot {smallest:.3e})",
            smallest_pivot=smallest,
        )
    swaps = int(np.sum(piv != np.arange(len(piv))))
    return complex(np.sum(np.log(diag.astype(complex))) + (1j * np.pi) * (swaps % 2))


def logdet_hpd(m: np.ndarray) -> float:
    """ln det of a Hermitian positive-definite matrix (real, branch-free)."""
    vals = np.linalg.eigvalsh(require_hermitian(m))
    if vals.min() <= 0:
        raise SingularityError(
            f"matrix is not positive definite (min eigenvalue {vals.min():.3e})",
            smallest_pivot=float(vals.min()),
        )
    return float(np.sum(np.log(vals)))
