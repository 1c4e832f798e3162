"""Monte Carlo over disorder realizations and ergodic-average diagnostics.

A realization's generating curve is evaluated with three nested regions: the
current lives on the inner box, the state Hamiltonian on a larger one, and
the dynamics on the largest (the ambient index space). Ensembles draw each
sample from its own counter-based seed, so results are reproducible and
independent of worker scheduling.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .currents import FieldProfile, QuadratureSpec, assemble_current_operator
from .errors import AccuracyError, ConfigError, FermildpError
from .lattice import (BoxDecomposition, DisorderSample, LatticeBox, ModelParams,
                      restrict_to_collection, sample_disorder, shift_disorder)
from .quasifree import GeneratingCurve, generating_curve


def sub_box_sites(dimension: int, radius: int) -> tuple:
    return tuple(itertools.product(range(-radius, radius + 1), repeat=dimension))


@dataclass(frozen=True)
class EnsembleSpec:
    """Sample count, seeds, model, nested radii, field, and the s-grid."""

    n_samples: int
    seed: int
    params: ModelParams
    dimension: int
    box_radius: int
    state_radius: int
    dynamics_radius: int
    cell_radius: int
    field: FieldProfile
    s_grid: tuple[float, ...]
    quadrature: QuadratureSpec = QuadratureSpec()
    mode: str = "uniform-iid"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("need at least one sample")
        if not (self.dynamics_radius >= self.state_radius >= self.box_radius
                >= self.cell_radius >= 1):
            raise ConfigError(
                "radii must satisfy dynamics >= state >= box >= cell >= 1, got "
                f"{self.dynamics_radius} >= {self.state_radius} >= {self.box_radius}"
                f" >= {self.cell_radius}")

    def sample_seed(self, i: int) -> int:
        return self.seed ^ i

    def with_box_radius(self, L: int) -> "EnsembleSpec":
        """Same spec at another inner radius, keeping the default 1:2:4 nesting."""
        return replace(self, box_radius=L, state_radius=2 * L, dynamics_radius=4 * L)


def realization_curve(spec: EnsembleSpec, omega: DisorderSample) -> GeneratingCurve:
    """Generating curve of one realization with the spec's nested collections."""
    ambient = LatticeBox(spec.dimension, spec.dynamics_radius)
    support = (sub_box_sites(spec.dimension, spec.box_radius),)
    state = (sub_box_sites(spec.dimension, spec.state_radius),)
    dynamics = (ambient.sites,)
    current = assemble_current_operator(ambient, omega, spec.params, spec.field,
                                        support, dynamics, spec.quadrature)
    h_state = restrict_to_collection(ambient, omega, spec.params, state)
    volume = len(support[0])
    provenance = {"seed": omega.seed, "mode": omega.mode,
                  "radii": [spec.box_radius, spec.state_radius, spec.dynamics_radius],
                  "quadrature": current.provenance["quadrature"]}
    return generating_curve(h_state, current.matrix, spec.params.beta,
                            np.asarray(spec.s_grid), volume, provenance)


def cell_curve(spec: EnsembleSpec, omega: DisorderSample) -> GeneratingCurve:
    """Generating curve of one realization with all regions equal to the cell box."""
    box = LatticeBox(spec.dimension, spec.cell_radius)
    whole = (box.sites,)
    current = assemble_current_operator(box, omega, spec.params, spec.field,
                                        whole, whole, spec.quadrature)
    h_state = restrict_to_collection(box, omega, spec.params, whole)
    return generating_curve(h_state, current.matrix, spec.params.beta,
                            np.asarray(spec.s_grid), box.n_sites,
                            {"seed": omega.seed, "cell_radius": spec.cell_radius})


@dataclass(frozen=True)
class ConvergenceReport:
    """Ensemble means, spreads, and the single-realization comparison."""

    s_grid: np.ndarray
    mean_values: np.ndarray
    stderr_values: np.ndarray
    mean_current: float
    stderr_current: float
    single_values: np.ndarray
    self_averaging_gap: float
    n_samples: int
    failures: tuple = ()

    def to_json(self) -> dict:
        return {
            "s_grid": [float(s) for s in self.s_grid],
            "mean_values": [float(v) for v in self.mean_values],
            "stderr_values": [float(v) for v in self.stderr_values],
            "mean_current": self.mean_current,
            "stderr_current": self.stderr_current,
            "single_values": [float(v) for v in self.single_values],
            "self_averaging_gap": self.self_averaging_gap,
            "n_samples": self.n_samples,
            "failures": [list(f) for f in self.failures],
        }


def _run_indexed(task, count: int, threads: int | None):
    """Evaluate task(i) for i < count, reducing in index order regardless of workers."""
    if threads is None or threads <= 1:
        return [task(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, range(count)))


def mc_generating(spec: EnsembleSpec, threads: int | None = None,
                  ) -> tuple[GeneratingCurve, ConvergenceReport]:
    """Disorder-averaged generating curve with per-sample bookkeeping.

    Numerical failures are recorded per sample, never retried; more than 10%
    of them aborts the whole run.
    """
    ambient = LatticeBox(spec.dimension, spec.dynamics_radius)

    def one(i: int):
        omega = sample_disorder(ambient, spec.sample_seed(i), spec.mode)
        try:
            return realization_curve(spec, omega)
        except FermildpError as err:
            return (i, f"{type(err).__name__}: {err}")

    results = _run_indexed(one, spec.n_samples, threads)
    failures = tuple(r for r in results if isinstance(r, tuple))
    curves = [r for r in results if not isinstance(r, tuple)]
    if len(failures) > 0.1 * spec.n_samples:
        raise AccuracyError(f"{len(failures)} of {spec.n_samples} samples failed",
                            report={"failures": [list(f) for f in failures]})
    if not curves:
        raise AccuracyError("all samples failed")
    n = len(curves)
    values = np.stack([c.values for c in curves])
    first = np.stack([c.first_derivative for c in curves])
    second = np.stack([c.second_derivative for c in curves])
    mean = GeneratingCurve(
        s_grid=np.asarray(spec.s_grid, dtype=float),
        values=values.mean(axis=0),
        first_derivative=first.mean(axis=0),
        second_derivative=second.mean(axis=0),
        volume=curves[0].volume,
        provenance={"ensemble_seed": spec.seed, "n_samples": n,
                    "radii": [spec.box_radius, spec.state_radius, spec.dynamics_radius]},
    )
    zero = mean.zero_index
    dj0 = first[:, zero]
    stderr = values.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(values.shape[1])
    report = ConvergenceReport(
        s_grid=mean.s_grid,
        mean_values=mean.values,
        stderr_values=stderr,
        mean_current=float(dj0.mean()),
        stderr_current=float(dj0.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        single_values=curves[0].values if not failures else values[0],
        self_averaging_gap=float(np.max(np.abs(curves[0].values - mean.values))),
        n_samples=n,
        failures=failures,
    )
    return mean, report


def _decomposition_cells(spec: EnsembleSpec, radius: int, cell_radius: int):
    parent = LatticeBox(spec.dimension, radius)
    return BoxDecomposition(parent, cell_radius).cells


def decomposed_curve(spec: EnsembleSpec, omega: DisorderSample, cells) -> GeneratingCurve:
    """Curve with support, state, and dynamics all equal to the cell collection."""
    ambient = LatticeBox(spec.dimension, spec.dynamics_radius)
    current = assemble_current_operator(ambient, omega, spec.params, spec.field,
                                        cells, cells, spec.quadrature)
    h_state = restrict_to_collection(ambient, omega, spec.params, cells)
    volume = sum(len(c) for c in cells)
    return generating_curve(h_state, current.matrix, spec.params.beta,
                            np.asarray(spec.s_grid), volume, {"cells": len(cells)})


def per_cell_curves(spec: EnsembleSpec, omega: DisorderSample, cells) -> list[GeneratingCurve]:
    """Each cell evaluated on its own small box with the shifted disorder."""
    out = []
    for cell in cells:
        center = tuple((min(s[k] for s in cell) + max(s[k] for s in cell)) // 2
                       for k in range(spec.dimension))
        shifted = shift_disorder(omega, center) if any(center) else omega
        out.append(cell_curve(spec, shifted))
    return out


def box_decomposition_compare(spec: EnsembleSpec, cell_radii=(2, 3, 4),
                              threads: int | None = None) -> list[dict]:
    """Nested-curve vs cell-averaged generating values, per cell radius.

    Also verifies the exact identity that evaluating with all three regions
    equal to the cell collection reproduces the arithmetic mean of the
    per-cell curves.
    """
    ambient = LatticeBox(spec.dimension, spec.dynamics_radius)
    omega = sample_disorder(ambient, spec.seed, spec.mode)
    full = realization_curve(spec, omega)
    out = []
    for l in cell_radii:
        if l > spec.box_radius:
            raise ConfigError("cell radius exceeds the inner box radius")
        cells = _decomposition_cells(spec, spec.box_radius, l)
        if not cells:
            raise ConfigError(f"no cells of radius {l} fit the inner box")
        spec_l = replace(spec, cell_radius=l)
        combined = decomposed_curve(spec_l, omega, cells)
        singles = per_cell_curves(spec_l, omega, cells)
        cell_mean = np.mean([c.values for c in singles], axis=0)
        out.append({
            "cell_radius": l,
            "box_radius": spec.box_radius,
            "n_cells": len(cells),
            "discrepancy": float(np.max(np.abs(full.values - cell_mean))),
            "identity_error": float(np.max(np.abs(combined.values - cell_mean))),
        })
    return out


def ergodic_average_check(spec: EnsembleSpec, threads: int | None = None) -> dict:
    """Spatial cell average of one large realization vs the ensemble mean.

    The spatial average runs over the disjoint cells of a single realization
    on the inner box; the Monte Carlo side draws independent cell-sized
    samples. Both come with their standard errors.
    """
    ambient = LatticeBox(spec.dimension, spec.dynamics_radius)
    omega = sample_disorder(ambient, spec.seed, spec.mode)
    cells = _decomposition_cells(spec, spec.box_radius, spec.cell_radius)
    if len(cells) < 2:
        raise ConfigError("need at least two cells for a spatial average")
    singles = per_cell_curves(spec, omega, cells)
    spatial = np.stack([c.values for c in singles])
    spatial_mean = spatial.mean(axis=0)
    spatial_se = spatial.std(axis=0, ddof=1) / np.sqrt(len(cells))

    small_box = LatticeBox(spec.dimension, spec.cell_radius)

    def one(i: int):
        w = sample_disorder(small_box, spec.sample_seed(i + 1), spec.mode)
        return cell_curve(spec, w).values

    mc = np.stack(_run_indexed(one, spec.n_samples, threads))
    mc_mean = mc.mean(axis=0)
    mc_se = mc.std(axis=0, ddof=1) / np.sqrt(spec.n_samples)
    combined = np.sqrt(spatial_se ** 2 + mc_se ** 2)
    gap = np.abs(spatial_mean - mc_mean)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(gap > 0, gap / np.where(combined > 0, combined, np.inf), 0.0)
    return {
        "s_grid": [float(s) for s in spec.s_grid],
        "n_cells": len(cells),
        "n_samples": spec.n_samples,
        "spatial_mean": [float(v) for v in spatial_mean],
        "spatial_stderr": [float(v) for v in spatial_se],
        "mc_mean": [float(v) for v in mc_mean],
        "mc_stderr": [float(v) for v in mc_se],
        "gap": [float(v) for v in gap],
        "max_sigma_ratio": float(np.max(ratio)),
    }
