"""Design-matrix assembly and least-squares solution.

Collocation rows apply the problem's differential operator to every
kernel; boundary, initial and sensor rows are plain kernel evaluations
with prescribed targets.  Coefficients come from the Moore-Penrose
pseudoinverse and the fit quality is the max-norm residual over all
rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .problems import PdeProblem, ProblemKind
from .rbf import RbfBasis, deriv_matrix, eval_matrix


class RowKind(IntEnum):
    INTERIOR = 0
    BOUNDARY = 1
    INITIAL = 2
    SENSOR = 3


@dataclass(frozen=True)
class LinearSystem:
    matrix: np.ndarray
    targets: np.ndarray
    row_kinds: np.ndarray

    def __post_init__(self):
        if self.matrix.shape[0] != self.targets.shape[0]:
            raise ValueError("row count of matrix and targets disagree")
        if self.row_kinds.shape[0] != self.matrix.shape[0]:
            raise ValueError("row_kinds length mismatch")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_coeffs(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SolvedModel:
    basis: RbfBasis
    coefficients: np.ndarray
    loss: float
    # adaptive-component id per kernel (0 = fixed baseline grid), attached
    # by callers that know the basis provenance; None when untracked
    tags: np.ndarray | None = None


def operator_matrix(problem: PdeProblem, basis: RbfBasis, points: np.ndarray) -> np.ndarray:
    """Apply the problem's differential operator to every kernel at the points."""
    kind = problem.kind
    if kind is ProblemKind.CONVDIFF1:
        return deriv_matrix(basis, points, 0, 1) - problem.nu * deriv_matrix(
            basis, points, 0, 2
        )
    if kind is ProblemKind.CONVDIFF2:
        pts = np.atleast_2d(points)
        vel = 2.0 * (2.0 * pts[:, 0] - 1.0)
        return (
            vel[:, None] * deriv_matrix(basis, pts, 0, 1)
            - problem.nu * deriv_matrix(basis, pts, 0, 2)
            + 4.0 * eval_matrix(basis, pts)
        )
    if kind is ProblemKind.POISSON2D:
        return deriv_matrix(basis, points, 0, 2) + deriv_matrix(basis, points, 1, 2)
    if kind is ProblemKind.ADVECTION1D:
        # axes are (x, t); transport term along axis 0, time along axis 1
        return deriv_matrix(basis, points, 1, 1) + problem.advection_speed * deriv_matrix(
            basis, points, 0, 1
        )
    raise ValueError(f"no operator for problem kind {kind}")


def boundary_targets(problem: PdeProblem, points: np.ndarray) -> np.ndarray:
    """Dirichlet values for boundary points, classified against the box edges."""
    points = np.atleast_2d(points)
    spec = problem.boundary_spec
    if "all" in spec:
        return np.full(points.shape[0], float(spec["all"]))
    lo = problem.domain.lower[0]
    hi = problem.domain.upper[0]
    left_key = "left" if "left" in spec else "x_low"
    right_key = "right" if "right" in spec else "x_high"
    out = np.empty(points.shape[0])
    for i, x in enumerate(points[:, 0]):
        if abs(x - lo) <= abs(x - hi):
            out[i] = float(spec[left_key])
        else:
            out[i] = float(spec[right_key])
    return out


def build_system(
    problem: PdeProblem,
    basis: RbfBasis,
    interior_pts: np.ndarray,
    boundary_pts: np.ndarray,
    extra_rows=None,
) -> LinearSystem:
    """Stack operator rows, boundary rows and any extra evaluation rows.

    extra_rows: iterable of (points, values, RowKind) triples, used for
    initial-condition rows and sensor-data rows.
    """
    if basis.n_kernels < 1:
        raise ValueError("basis must contain at least one kernel")
    interior_pts = np.atleast_2d(np.asarray(interior_pts, dtype=float))
    boundary_pts = np.atleast_2d(np.asarray(boundary_pts, dtype=float))
    if interior_pts.shape[0] == 0:
        raise ValueError("interior points required")
    if boundary_pts.shape[0] == 0:
        raise ValueError("boundary points required")

    blocks = [operator_matrix(problem, basis, interior_pts)]
    targets = [problem.source(interior_pts)]
    kinds = [np.full(interior_pts.shape[0], RowKind.INTERIOR, dtype=int)]

    blocks.append(eval_matrix(basis, boundary_pts))
    targets.append(boundary_targets(problem, boundary_pts))
    kinds.append(np.full(boundary_pts.shape[0], RowKind.BOUNDARY, dtype=int))

    for pts, vals, kind in extra_rows or ():
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.asarray(vals, dtype=float)
        if pts.shape[0] != vals.shape[0]:
            raise ValueError("extra row points/values length mismatch")
        blocks.append(eval_matrix(basis, pts))
        targets.append(vals)
        kinds.append(np.full(pts.shape[0], RowKind(kind), dtype=int))

    return LinearSystem(
        np.vstack(blocks), np.concatenate(targets), np.concatenate(kinds)
    )


def solve_least_squares(system: LinearSystem, rcond: float = 1e-12) -> np.ndarray:
    """Minimum-norm least-squares coefficients via SVD pseudoinverse."""
    if system.n_rows == 0 or system.n_coeffs == 0:
        raise ValueError("cannot solve an empty system")
    if not (np.all(np.isfinite(system.matrix)) and np.all(np.isfinite(system.targets))):
        raise ArithmeticError("non-finite entries in linear system")
    try:
        coeffs, _, _, _ = np.linalg.lstsq(system.matrix, system.targets, rcond=rcond)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"least-squares solve failed: {exc}") from exc
    if not np.all(np.isfinite(coeffs)):
        raise ArithmeticError("least-squares solve produced non-finite coefficients")
    return coeffs


def residual_loss(system: LinearSystem, coeffs: np.ndarray) -> float:
    return float(np.max(np.abs(system.matrix @ coeffs - system.targets)))


def solve_system(system: LinearSystem, basis: RbfBasis, rcond: float = 1e-12) -> SolvedModel:
    coeffs = solve_least_squares(system, rcond)
    return SolvedModel(basis, coeffs, residual_loss(system, coeffs))


def evaluate_model(model: SolvedModel, points: np.ndarray) -> np.ndarray:
    return eval_matrix(model.basis, points) @ model.coefficients
