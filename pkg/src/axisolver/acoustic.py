"""Spectral-in-time acoustic wave simulation on the axisymmetric grid.

The time axis is expanded in the orthonormal exponential-polynomial basis of
:mod:`axisolver.laguerre`.  That turns the wave equation into a chain of
elliptic problems that all share ONE discrete operator -- the expansion
parameter only enters the right-hand sides, which couple each harmonic to
every previous one through two running sums updated in O(1) per step.

Pipeline:

1. project the source wavelet onto the basis (``project_source``),
2. assemble the shared operator: diffusion slot takes the medium's ``v_s``
   field and the reaction slot takes ``h^2 / (4 rho^2)``,
3. for m = 0, 1, ...: build the rhs from the point source and the running
   sums, solve with PCG or Chebyshev using the separable preconditioner,
   absorb the new harmonic into the sums,
4. synthesize time-domain fields or receiver traces as weighted partial sums
   of the stored harmonics.

The half-space geometry (zero-flux planes at both z walls, symmetry axis at
r = 0) makes a source near the origin radiate a spherical front travelling
at ``rho * sqrt(v_s)``; the provided model builders take the desired wave
SPEED and store ``v_s = (speed / rho)^2`` so fronts move at the requested
speed.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .elliptic import (CoefficientFields, DiscreteOperator, Grid2D, assemble,
                       write_field_raw)
from .errors import DomainError, HarmonicSolveFailure, SolverError
from .iterative import chebyshev_solve, estimate_bounds, pcg_solve
from .laguerre import laguerre_function_table, project_source
from .sov import SovPreconditioner

__all__ = [
    "LaguerreParams",
    "Wavelet",
    "MediumModel",
    "LaguerreSeries",
    "RunningSums",
    "coupling_coefficient",
    "harmonic_operator",
    "harmonic_rhs",
    "solve_all_harmonics",
    "reconstruct",
    "snapshot_field",
    "write_seismogram",
    "write_snapshot",
]

# the envelope threshold that defines "effectively zero" for time supports
_ENVELOPE_FLOOR = 1e-14


@dataclass(frozen=True)
class LaguerreParams:
    """Transform parameters: time scale ``h`` (1/s), integer order ``alpha``
    of the basis, and the series length ``n_terms``."""

    h: float
    alpha: int
    n_terms: int

    def __post_init__(self):
        if not self.h > 0.0:
            raise DomainError(f"h must be positive, got {self.h}")
        if int(self.alpha) != self.alpha or self.alpha < 2:
            raise DomainError(
                f"alpha must be an integer >= 2, got {self.alpha!r}")
        if int(self.n_terms) != self.n_terms or self.n_terms < 1:
            raise DomainError(
                f"n_terms must be a positive integer, got {self.n_terms!r}")
        object.__setattr__(self, "alpha", int(self.alpha))
        object.__setattr__(self, "n_terms", int(self.n_terms))


@dataclass(frozen=True)
class Wavelet:
    """Modulated-Gaussian source pulse
    ``amplitude * exp(-(2 pi f0 (t - t0))^2 / gamma^2) * sin(2 pi f0 (t - t0))``.

    The transform pair assumes signals that are quiescent at t = 0, so pick
    ``t0`` large enough that the envelope at zero is negligible --
    ``t0 >= gamma * sqrt(-ln(1e-14)) / (2 pi f0)`` guarantees it.
    """

    f0: float
    t0: float = 0.2
    gamma: float = 4.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.f0 > 0.0:
            raise DomainError(f"f0 must be positive, got {self.f0}")
        if not self.gamma > 0.0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if self.t0 < 0.0:
            raise DomainError(f"t0 must be >= 0, got {self.t0}")

    def __call__(self, t):
        arg = 2.0 * np.pi * self.f0 * (np.asarray(t, dtype=np.float64)
                                       - self.t0)
        return self.amplitude * np.exp(-(arg ** 2) / self.gamma ** 2) \
            * np.sin(arg)

    @property
    def half_width(self) -> float:
        """Half-duration beyond which the envelope is below 1e-14."""
        return self.gamma * math.sqrt(-math.log(_ENVELOPE_FLOOR)) \
            / (2.0 * np.pi * self.f0)

    @property
    def support_end(self) -> float:
        """End of the effective support ``[onset, support_end]``."""
        return self.t0 + self.half_width

    @property
    def onset(self) -> float:
        """First time the envelope exceeds 1e-14 (clipped at zero)."""
        return max(0.0, self.t0 - self.half_width)

    @property
    def is_quiescent(self) -> bool:
        """True when the envelope at t = 0 is below the 1e-14 floor."""
        return self.onset > 0.0 or self.t0 == 0.0 and self.amplitude == 0.0


@dataclass(frozen=True)
class MediumModel:
    """Coefficient fields of the medium: ``v_s`` fills the diffusion slot of
    the elliptic operator and ``rho`` the density; ``max_speed`` is the
    largest front speed ``rho * sqrt(v_s)``, used by travel-time oracles."""

    v_s: Callable
    rho: Callable
    max_speed: float

    @classmethod
    def homogeneous(cls, speed: float, rho: float = 1.0) -> "MediumModel":
        """Uniform medium whose fronts travel at ``speed``."""
        if not speed > 0.0 or not rho > 0.0:
            raise DomainError(
                f"speed and rho must be positive, got {speed}, {rho}")
        vs = (speed / rho) ** 2
        return cls(v_s=lambda r, z: np.full(np.broadcast(r, z).shape, vs),
                   rho=lambda r, z: np.full(np.broadcast(r, z).shape, rho),
                   max_speed=speed)

    @classmethod
    def fault(cls, v_top: float, v_bottom: float, interface_z: float,
              throw: float = 0.0, fault_r: float = 0.0, dip: float = 0.0,
              rho: float = 1.0) -> "MediumModel":
        """Two-layer medium with an optionally dipping interface and a
        vertical displacement (``throw``) of the interface at ``r > fault_r``.

        All numeric defaults are artifact choices for synthetic tests.
        """
        if not (v_top > 0.0 and v_bottom > 0.0 and rho > 0.0):
            raise DomainError("layer speeds and rho must be positive")

        def v_s(r, z):
            r, z = np.broadcast_arrays(np.asarray(r, dtype=np.float64),
                                       np.asarray(z, dtype=np.float64))
            boundary = interface_z + dip * r + np.where(r > fault_r, throw,
                                                        0.0)
            speed = np.where(z < boundary, v_top, v_bottom)
            return (speed / rho) ** 2

        return cls(v_s=v_s,
                   rho=lambda r, z: np.full(np.broadcast(r, z).shape, rho),
                   max_speed=max(v_top, v_bottom))


@dataclass(frozen=True)
class LaguerreSeries:
    """Solved harmonic fields plus solver accounting.

    ``harmonics[m]`` is the grid field of expansion order ``m`` (shape
    ``grid.unknown_shape``); ``binv_applications`` totals the preconditioner
    inversions across all harmonics, the cost proxy used by the mesh
    independence checks; ``iterations`` holds the per-harmonic outer
    counts.
    """

    grid: Grid2D
    params: LaguerreParams
    harmonics: np.ndarray
    source_coeffs: np.ndarray
    binv_applications: int
    operator_checksum: str
    iterations: Tuple[int, ...] = field(default=(), repr=False)

    def __post_init__(self):
        q = np.asarray(self.harmonics, dtype=np.float64)
        expect = (self.params.n_terms,) + self.grid.unknown_shape
        if q.shape != expect:
            raise DomainError(f"harmonics shape {q.shape} != {expect}")
        if not np.all(np.isfinite(q)):
            raise DomainError("harmonics contain non-finite entries")
        q.setflags(write=False)
        object.__setattr__(self, "harmonics", q)

    def harmonic_energies(self) -> np.ndarray:
        """Squared 2-norm of each harmonic field."""
        flat = self.harmonics.reshape(self.params.n_terms, -1)
        return np.einsum("ij,ij->i", flat, flat)

    def tail_energy_ratio(self) -> float:
        """Energy share of the last 5% of harmonics -- a truncation
        diagnostic; values near zero indicate a resolved series."""
        e = self.harmonic_energies()
        total = float(e.sum())
        if total == 0.0:
            return 0.0
        tail = max(1, math.ceil(0.05 * self.params.n_terms))
        return float(e[-tail:].sum()) / total


# ---------------------------------------------------------------------------
# harmonic coupling
# ---------------------------------------------------------------------------


def coupling_coefficient(m: int, k: int, alpha: float) -> float:
    """Weight of harmonic ``k`` in the rhs of harmonic ``m``:
    ``(m - k) * sqrt(m! k+alpha! / (m+alpha! k!))`` evaluated in log space
    (the factorials are never formed)."""
    if k >= m:
        return 0.0
    log_ratio = 0.5 * (math.lgamma(m + 1) - math.lgamma(m + alpha + 1)
                       + math.lgamma(k + alpha + 1) - math.lgamma(k + 1))
    return (m - k) * math.exp(log_ratio)


class RunningSums:
    """O(1)-per-harmonic accumulators for the coupling sums.

    Stores ``s1 = sum_k eta_k Q_k`` and ``s2 = sum_k k eta_k Q_k`` with
    ``eta_k = exp(0.5 * (lgamma(k+alpha+1) - lgamma(k+1)))``; harmonic ``m``
    then needs only ``nu_m * (m * s1 - s2)`` where
    ``nu_m = exp(0.5 * (lgamma(m+1) - lgamma(m+alpha+1)))``.  The huge
    ``eta``/tiny ``nu`` factors cancel in the product, but each half goes
    through ``exp`` separately, which bounds the usable order: for alpha = 5,
    m <= 2000 the factors stay far below the overflow threshold.
    """

    def __init__(self, grid: Grid2D, alpha: float):
        self.alpha = float(alpha)
        self.count = 0
        self.s1 = np.zeros(grid.unknown_shape)
        self.s2 = np.zeros(grid.unknown_shape)

    def absorb(self, q_k: np.ndarray) -> None:
        """Fold the most recently solved harmonic into the sums."""
        k = self.count
        eta = math.exp(0.5 * (math.lgamma(k + self.alpha + 1)
                              - math.lgamma(k + 1)))
        self.s1 += eta * q_k
        self.s2 += (k * eta) * q_k
        self.count += 1

    def weighted_combination(self, m: int) -> np.ndarray:
        """``nu_m * (m * s1 - s2)``, the coupling field for harmonic ``m``."""
        if m != self.count:
            raise DomainError(
                f"harmonic {m} requested but {self.count} harmonics absorbed")
        nu = math.exp(0.5 * (math.lgamma(m + 1)
                             - math.lgamma(m + self.alpha + 1)))
        return nu * (m * self.s1 - self.s2)


# ---------------------------------------------------------------------------
# per-harmonic elliptic problems
# ---------------------------------------------------------------------------


def harmonic_operator(grid: Grid2D, model: MediumModel,
                      params: LaguerreParams) -> DiscreteOperator:
    """The shared elliptic operator: diffusion ``v_s``, reaction
    ``h^2 / (4 rho^2)``.  Identical for every harmonic."""
    shift = 0.25 * params.h ** 2

    def reaction(r, z):
        return shift / np.asarray(model.rho(r, z), dtype=np.float64) ** 2

    fields = CoefficientFields.from_samplers(model.v_s, reaction, grid)
    return assemble(grid, fields)


def harmonic_rhs(op: DiscreteOperator, m: int, source_node: Tuple[int, int],
                 f_m: float, sums: RunningSums) -> np.ndarray:
    """Right-hand side of harmonic ``m`` in the SPD orientation used by the
    iterative solvers (the radially weighted negative of the divergence-form
    equation): a point source at ``source_node = (k, i)`` scaled by
    ``f_m / (2 pi h1 h2)`` minus the coupling field from previous harmonics.

    The coupling carries ``r * h^2 / rho^2``, which equals four times the
    operator's stored reaction array, so no coefficient re-sampling happens
    here.
    """
    g = op.grid
    k0, i0 = source_node
    nz, nu = g.unknown_shape
    if not (0 <= k0 < nz and 0 <= i0 < nu):
        raise DomainError(f"source node {source_node} outside {g.unknown_shape}")
    rhs = -4.0 * op.reaction * sums.weighted_combination(m)
    rhs[k0, i0] += f_m / (2.0 * np.pi * g.dr * g.dz)
    return rhs


def solve_all_harmonics(grid: Grid2D, model: MediumModel,
                        params: LaguerreParams, wavelet: Wavelet, *,
                        source: Tuple[float, float] = (0.0, 0.0),
                        method: str = "pcg", tol: float = 1e-10,
                        maxiter: int = 500, ranks: int = 1,
                        executor: str = "sim", bounds=None,
                        progress: Optional[Callable] = None) -> LaguerreSeries:
    """Solve the whole chain of elliptic problems for harmonics
    ``0 .. n_terms-1``.

    The operator and the separable preconditioner are built once; a checksum
    guard re-verifies before every solve that the system matrix did not
    change (only the rhs may).  Solver failures are re-raised as
    :class:`HarmonicSolveFailure` carrying the harmonic index.
    ``progress(m, report)`` is invoked after each harmonic when given.
    """
    if method not in ("pcg", "chebyshev"):
        raise DomainError(f"method must be 'pcg' or 'chebyshev', got {method!r}")
    coeffs = project_source(wavelet, params.n_terms - 1, params.alpha,
                            params.h, t_upper=wavelet.support_end)
    op = harmonic_operator(grid, model, params)
    baseline = op.checksum()
    pc = SovPreconditioner.from_operator(op, ranks=ranks, executor=executor)
    if method == "chebyshev" and bounds is None:
        bounds = estimate_bounds(op.apply_spd, pc.apply_inverse,
                                 grid.n_unknowns, steps=40)

    node = grid.nearest_node(*source)
    sums = RunningSums(grid, params.alpha)
    harmonics = np.zeros((params.n_terms,) + grid.unknown_shape)
    total_binv = 0
    iterations = []
    for m in range(params.n_terms):
        if op.checksum() != baseline:
            raise SolverError(f"operator changed before harmonic {m}: "
                              f"checksum mismatch")
        rhs = harmonic_rhs(op, m, node, float(coeffs[m]), sums)
        try:
            if method == "pcg":
                x, report = pcg_solve(op.apply_spd, pc.apply_inverse, rhs,
                                      tol=tol, maxiter=maxiter)
            else:
                x, report = chebyshev_solve(op.apply_spd, pc.apply_inverse,
                                            rhs, bounds, tol=tol,
                                            maxiter=maxiter)
        except SolverError as exc:
            raise HarmonicSolveFailure(m, exc) from exc
        q_m = x.reshape(grid.unknown_shape)
        harmonics[m] = q_m
        sums.absorb(q_m)
        total_binv += report.binv_applications
        iterations.append(report.iterations)
        if progress is not None:
            progress(m, report)
    return LaguerreSeries(grid=grid, params=params, harmonics=harmonics,
                          source_coeffs=coeffs, binv_applications=total_binv,
                          operator_checksum=baseline,
                          iterations=tuple(iterations))


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def _synthesis_weights(params: LaguerreParams, times) -> np.ndarray:
    """Rows of ``(h t)^(alpha/2) * l_m(h t)`` for every requested time."""
    times = np.asarray(times, dtype=np.float64).ravel()
    if times.size and times.min() < 0.0:
        raise DomainError("times must be >= 0")
    taus = params.h * times
    table = laguerre_function_table(params.n_terms - 1, params.alpha, taus,
                                    h=params.h)
    power = np.where(taus > 0.0,
                     np.exp(0.5 * params.alpha
                            * np.log(np.where(taus > 0.0, taus, 1.0))),
                     0.0)
    return power[:, None] * table


def reconstruct(series: LaguerreSeries, times,
                positions: Sequence[Tuple[float, float]]) -> np.ndarray:
    """Receiver traces ``u(x_j, t_i)`` as an ``(n_times, n_positions)``
    array; each ``(r, z)`` position snaps to its nearest grid node."""
    weights = _synthesis_weights(series.params, times)
    nodes = [series.grid.nearest_node(r, z) for r, z in positions]
    if not nodes:
        raise DomainError("need at least one receiver position")
    q_sel = np.stack([series.harmonics[:, k, i] for k, i in nodes], axis=1)
    return weights @ q_sel


def snapshot_field(series: LaguerreSeries, t: float) -> np.ndarray:
    """The full wavefield at one instant (shape ``grid.unknown_shape``)."""
    weights = _synthesis_weights(series.params, [t])[0]
    return np.tensordot(weights, series.harmonics, axes=(0, 0))


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def write_seismogram(path, times, traces) -> None:
    """CSV with header ``t, u(x1), u(x2), ...``; values as shortest
    round-trip decimals so reruns are byte-identical."""
    times = np.asarray(times, dtype=np.float64).ravel()
    traces = np.asarray(traces, dtype=np.float64)
    if traces.ndim != 2 or traces.shape[0] != times.size:
        raise DomainError(
            f"traces must be (n_times, n_receivers), got {traces.shape}")
    header = ", ".join(["t"] + [f"u(x{j + 1})" for j in
                                range(traces.shape[1])])
    lines = [header]
    for t, row in zip(times, traces):
        lines.append(", ".join([repr(float(t))]
                               + [repr(float(v)) for v in row]))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_snapshot(path, series: LaguerreSeries, t: float) -> np.ndarray:
    """Raw-grid snapshot of the field at time ``t`` plus a ``.meta`` text
    sidecar recording the instant, the grid, and the transform parameters.
    Returns the synthesized field (full node grid: the zero-valued outer
    wall column is appended so the file is a complete (nz, nr) panel)."""
    inner = snapshot_field(series, t)
    fld = np.concatenate([inner, np.zeros((series.grid.nz, 1))], axis=1)
    write_field_raw(path, series.grid, fld)
    g, p = series.grid, series.params
    meta = "\n".join([
        f"t = {float(t)!r}",
        f"nr = {g.nr} nz = {g.nz} rmax = {g.rmax!r} zmax = {g.zmax!r}",
        f"h = {p.h!r} alpha = {p.alpha} n_terms = {p.n_terms}",
    ]) + "\n"
    with open(f"{path}.meta", "w", encoding="ascii") as fh:
        fh.write(meta)
    return fld
