"""Deterministic sub-pixel localizers: intensity centroid and a 2D
Gaussian least-squares fit (the high-accuracy oracle)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .patches import PATCH_SIZE, PeakPatch, PeakPosition, render_patch


class DegenerateInputError(ValidationError):
    """Patch carries no localizable signal (e.g. all pixels equal)."""


_CENTERS = np.arange(PATCH_SIZE, dtype=np.float64) + 0.5
_GRID_X, _GRID_Y = np.meshgrid(_CENTERS, _CENTERS, indexing="ij")


@dataclass(frozen=True)
class FitReport:
    converged: bool
    iterations: int
    residual_norm: float
    params: tuple  # (cx, cy, amplitude, sigma_x, sigma_y, background)


def _weights(patch: PeakPatch) -> np.ndarray:
    grid = np.asarray(patch.intensities, dtype=np.float64)
    weights = grid - grid.min()
    if weights.sum() <= 0.0:
        raise DegenerateInputError("patch has no intensity above its minimum")
    return weights


def centroid_locate(patch: PeakPatch) -> PeakPosition:
    """Intensity-weighted mean of pixel centers after minimum subtraction."""
    weights = _weights(patch)
    total = weights.sum()
    x = float((weights * _GRID_X).sum() / total)
    y = float((weights * _GRID_Y).sum() / total)
    return PeakPosition(x, y)


def _moment_init(patch: PeakPatch) -> np.ndarray:
    grid = np.asarray(patch.intensities, dtype=np.float64)
    background = float(grid.min())
    weights = _weights(patch)  # raises on degenerate input
    total = weights.sum()
    cx = float((weights * _GRID_X).sum() / total)
    cy = float((weights * _GRID_Y).sum() / total)
    var_x = float((weights * (_GRID_X - cx) ** 2).sum() / total)
    var_y = float((weights * (_GRID_Y - cy) ** 2).sum() / total)
    sigma_x = float(np.clip(np.sqrt(max(var_x, 1e-6)), 0.3, 5.0))
    sigma_y = float(np.clip(np.sqrt(max(var_y, 1e-6)), 0.3, 5.0))
    amplitude = float(grid.max() - background)
    return np.array([cx, cy, max(amplitude, 1e-9), sigma_x, sigma_y, background])


def _model_and_jacobian(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cx, cy, amplitude, sigma_x, sigma_y, background = theta
    dx = _GRID_X - cx
    dy = _GRID_Y - cy
    shape = np.exp(-(dx * dx) / (2 * sigma_x ** 2) - (dy * dy) / (2 * sigma_y ** 2))
    model = background + amplitude * shape
    jac = np.empty((PATCH_SIZE * PATCH_SIZE, 6))
    jac[:, 0] = (amplitude * shape * dx / sigma_x ** 2).ravel()
    jac[:, 1] = (amplitude * shape * dy / sigma_y ** 2).ravel()
    jac[:, 2] = shape.ravel()
    jac[:, 3] = (amplitude * shape * dx * dx / sigma_x ** 3).ravel()
    jac[:, 4] = (amplitude * shape * dy * dy / sigma_y ** 3).ravel()
    jac[:, 5] = 1.0
    return model.ravel(), jac


def gaussian_fit_locate(patch: PeakPatch, tol: float = 1e-10,
                        max_iter: int = 200) -> tuple[PeakPosition, FitReport]:
    """Least-squares fit of the separable Gaussian model.

    Gauss-Newton with Levenberg damping on the six parameters
    (cx, cy, amplitude, sigma_x, sigma_y, background), initialized from
    centroid and second-moment estimates. Converged when the accepted step
    norm drops below `tol`; non-convergence returns the last iterate with
    the report flagged.
    """
    target = np.asarray(patch.intensities, dtype=np.float64).ravel()
    theta = _moment_init(patch)  # raises on degenerate input
    lam = 1e-3
    model, jac = _model_and_jacobian(theta)
    cost = float(((model - target) ** 2).sum())
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        residual = model - target
        normal = jac.T @ jac
        gradient = jac.T @ residual
        step = None
        for _ in range(40):
            damped = normal + lam * np.diag(np.maximum(np.diag(normal), 1e-12))
            try:
                candidate = np.linalg.solve(damped, -gradient)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + candidate
            # keep widths positive and amplitude non-degenerate
            trial[3] = max(trial[3], 1e-3)
            trial[4] = max(trial[4], 1e-3)
            trial_model, trial_jac = _model_and_jacobian(trial)
            trial_cost = float(((trial_model - target) ** 2).sum())
            if trial_cost <= cost:
                step = trial - theta
                theta, model, jac, cost = trial, trial_model, trial_jac, trial_cost
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 10
        if step is None:
            break
        if float(np.linalg.norm(step)) < tol:
            converged = True
            break

    report = FitReport(converged=converged, iterations=iterations,
                       residual_norm=float(np.sqrt(cost)), params=tuple(theta))
    return PeakPosition(float(theta[0]), float(theta[1])), report


def fit_oracle_patch(cx, cy, amplitude=1.0, sigma_x=1.0, sigma_y=1.0,
                     background=0.0) -> PeakPatch:
    """Noiseless patch straight from the generator model (test helper)."""
    grid = render_patch(cx, cy, amplitude, sigma_x, sigma_y, background)
    return PeakPatch(intensities=grid.astype(np.float32),
                     truth=PeakPosition(cx, cy))
