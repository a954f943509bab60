"""Preconditioned iterative solvers for symmetric positive-definite systems.

Both solvers consume the operator and the preconditioner as callables
(``apply_op(v)``, ``apply_pc(v)`` for the inverse preconditioner action) so
they work with matrix-free discretizations.  They report work in terms of
preconditioner applications, the unit the mesh-independence diagnostics are
stated in.

``pcg_solve`` is the conjugate-gradient iteration with a symmetric positive
preconditioner.  ``chebyshev_solve`` is the two-term Chebyshev semi-iteration
over a given spectral interval of the preconditioned operator; it needs no
inner products, so the residual norm is evaluated only at sparse convergence
checkpoints (first after one step, then every ``check_every`` steps), making
the per-step cost communication-free in a distributed setting.
``estimate_bounds`` recovers a spectral interval for the Chebyshev method
from the tridiagonal (Lanczos) coefficients of a few conjugate-gradient
probe runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import Breakdown, InvalidBounds, MaxIterExceeded

__all__ = ["SpectralBounds", "IterationReport", "pcg_solve",
           "chebyshev_solve", "estimate_bounds"]


@dataclass(frozen=True)
class SpectralBounds:
    """A positive interval [lower, upper] enclosing the spectrum of the
    preconditioned operator."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise InvalidBounds(f"bounds must be finite, got "
                                f"[{self.lower}, {self.upper}]")
        if not (0.0 < self.lower <= self.upper):
            raise InvalidBounds(
                f"need 0 < lower <= upper, got [{self.lower}, {self.upper}]")

    @property
    def ratio(self) -> float:
        """lower/upper in (0, 1]; the equivalence ratio of the pair."""
        return self.lower / self.upper

    @property
    def condition(self) -> float:
        return self.upper / self.lower

    @property
    def convergence_factor(self) -> float:
        """Asymptotic error reduction per step, (1 - sqrt(ratio))/(1 + sqrt(ratio))."""
        s = np.sqrt(self.ratio)
        return (1.0 - s) / (1.0 + s)


@dataclass(frozen=True)
class IterationReport:
    """Outcome of an iterative solve."""

    iterations: int
    final_relres: float
    converged: bool
    binv_applications: int
    history: Tuple[Tuple[int, float], ...] = ()
    solution: Optional[np.ndarray] = field(default=None, repr=False)


def _flat(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v.ravel() if v.ndim > 1 else v


def pcg_solve(apply_op: Callable, apply_pc: Callable, rhs, *,
              tol: float = 1e-10, maxiter: int = 500,
              trace: Optional[Callable] = None
              ) -> Tuple[np.ndarray, IterationReport]:
    """Preconditioned conjugate gradients for SPD ``apply_op`` with SPD
    inverse-preconditioner action ``apply_pc``.

    Returns ``(x, report)`` once the 2-norm relative residual drops to
    ``tol``; raises :class:`MaxIterExceeded` (carrying the report with the
    last iterate) otherwise, and :class:`Breakdown` when a direction loses
    positive curvature, which signals a non-SPD pair.  ``trace(it, x, relres)``
    is invoked after every iteration when given.
    """
    f = _flat(rhs, "rhs")
    norm_f = float(np.linalg.norm(f))
    if norm_f == 0.0:
        report = IterationReport(0, 0.0, True, 0, (), np.zeros_like(f))
        return np.zeros_like(f), report

    x = np.zeros_like(f)
    r = f.copy()
    z = np.asarray(apply_pc(r), dtype=np.float64).ravel()
    binv = 1
    rz = float(r @ z)
    if rz <= 0.0:
        raise Breakdown(f"preconditioner lost positivity: r^T z = {rz!r}")
    p = z.copy()
    history = []
    for it in range(1, maxiter + 1):
        Ap = np.asarray(apply_op(p), dtype=np.float64).ravel()
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise Breakdown(f"direction lost positive curvature: "
                            f"p^T A p = {pAp!r}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        relres = float(np.linalg.norm(r)) / norm_f
        history.append((it, relres))
        if trace is not None:
            trace(it, x.copy(), relres)
        if relres <= tol:
            report = IterationReport(it, relres, True, binv,
                                     tuple(history), x)
            return x, report
        z = np.asarray(apply_pc(r), dtype=np.float64).ravel()
        binv += 1
        rz_new = float(r @ z)
        if rz_new <= 0.0:
            raise Breakdown(f"preconditioner lost positivity: "
                            f"r^T z = {rz_new!r}")
        p = z + (rz_new / rz) * p
        rz = rz_new
    report = IterationReport(maxiter, history[-1][1], False, binv,
                             tuple(history), x)
    raise MaxIterExceeded(report)


def chebyshev_solve(apply_op: Callable, apply_pc: Callable, rhs,
                    bounds: SpectralBounds, *, tol: float = 1e-10,
                    maxiter: int = 1000, check_every: int = 8,
                    norm: Optional[Callable] = None,
                    trace: Optional[Callable] = None
                    ) -> Tuple[np.ndarray, IterationReport]:
    """Two-term Chebyshev semi-iteration over ``bounds``.

    The residual norm (``norm``, default the 2-norm) is evaluated only after
    the first step and then every ``check_every`` steps, so steps in between
    involve no reductions.  Convergence semantics match :func:`pcg_solve`.
    """
    if check_every < 1:
        raise InvalidBounds(f"check_every must be >= 1, got {check_every}")
    norm_fn = np.linalg.norm if norm is None else norm
    f = _flat(rhs, "rhs")
    norm_f = float(norm_fn(f))
    if norm_f == 0.0:
        report = IterationReport(0, 0.0, True, 0, (), np.zeros_like(f))
        return np.zeros_like(f), report

    theta = 0.5 * (bounds.upper + bounds.lower)
    delta = 0.5 * (bounds.upper - bounds.lower)
    x = np.zeros_like(f)
    r = f.copy()
    d = np.asarray(apply_pc(r), dtype=np.float64).ravel() / theta
    binv = 1
    history = []
    scalar_spectrum = delta <= 1e-14 * theta
    sigma1 = None if scalar_spectrum else theta / delta
    rho = None if scalar_spectrum else 1.0 / sigma1
    for it in range(1, maxiter + 1):
        x += d
        r -= np.asarray(apply_op(d), dtype=np.float64).ravel()
        if it == 1 or it % check_every == 0:
            relres = float(norm_fn(r)) / norm_f
            history.append((it, relres))
            if trace is not None:
                trace(it, x.copy(), relres)
            if relres <= tol:
                report = IterationReport(it, relres, True, binv,
                                         tuple(history), x)
                return x, report
        z = np.asarray(apply_pc(r), dtype=np.float64).ravel()
        binv += 1
        if scalar_spectrum:
            d = z / theta
        else:
            rho_next = 1.0 / (2.0 * sigma1 - rho)
            d = (rho_next * rho) * d + (2.0 * rho_next / delta) * z
            rho = rho_next
    final = float(norm_fn(r)) / norm_f
    history.append((maxiter, final))
    report = IterationReport(maxiter, final, False, binv, tuple(history), x)
    raise MaxIterExceeded(report)


def estimate_bounds(apply_op: Callable, apply_pc: Callable, n: int, *,
                    probes: int = 1, steps: int = 50, seed: int = 0,
                    margin: float = 0.05) -> SpectralBounds:
    """Spectral interval of the preconditioned operator from the Lanczos
    coefficients of ``probes`` short conjugate-gradient runs.

    Each run on a random right-hand side yields step sizes ``alpha_j`` and
    direction ratios ``beta_j``; the associated Jacobi matrix has diagonal
    ``1/alpha_j + beta_{j-1}/alpha_{j-1}`` and off-diagonal
    ``sqrt(beta_j)/alpha_j``, and its eigenvalues approximate the extreme
    eigenvalues from inside, so the result is widened by ``margin``.
    """
    if n < 1:
        raise InvalidBounds(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, -np.inf
    for _ in range(max(1, probes)):
        f = rng.standard_normal(n)
        x = np.zeros(n)
        r = f.copy()
        z = np.asarray(apply_pc(r), dtype=np.float64).ravel()
        rz = float(r @ z)
        if rz <= 0.0:
            raise Breakdown(f"preconditioner lost positivity: r^T z = {rz!r}")
        p = z.copy()
        alphas, betas = [], []
        norm_f = float(np.linalg.norm(f))
        for _step in range(steps):
            Ap = np.asarray(apply_op(p), dtype=np.float64).ravel()
            pAp = float(p @ Ap)
            if pAp <= 0.0:
                raise Breakdown(f"direction lost positive curvature: "
                                f"p^T A p = {pAp!r}")
            alphas.append(rz / pAp)
            x += alphas[-1] * p
            r -= alphas[-1] * Ap
            if float(np.linalg.norm(r)) <= 1e-14 * norm_f:
                break
            z = np.asarray(apply_pc(r), dtype=np.float64).ravel()
            rz_new = float(r @ z)
            if rz_new <= 0.0:
                raise Breakdown(f"preconditioner lost positivity: "
                                f"r^T z = {rz_new!r}")
            betas.append(rz_new / rz)
            p = z + betas[-1] * p
            rz = rz_new
        k = len(alphas)
        diag = np.array([1.0 / alphas[j]
                         + (betas[j - 1] / alphas[j - 1] if j else 0.0)
                         for j in range(k)])
        off = np.array([np.sqrt(betas[j]) / alphas[j] for j in range(k - 1)])
        if k == 1:
            theta = diag
        else:
            theta = np.linalg.eigvalsh(np.diag(diag) + np.diag(off, 1)
                                       + np.diag(off, -1))
        lo = min(lo, float(theta.min()))
        hi = max(hi, float(theta.max()))
    return SpectralBounds((1.0 - margin) * lo, (1.0 + margin) * hi)
