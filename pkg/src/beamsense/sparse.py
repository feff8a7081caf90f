"""Model-based beam predictors: exhaustive search, RSS matching pursuit,
and a nonnegative sparse recovery program on magnitude measurements.

The sparse program is
    min_x  gamma * ||x||_1 + ||A x - y~||^2 / ||y~||^2,   x >= 0,
with y~ the max-normalized measurement vector; this is the epigraph form
of the constrained program with the residual bound tight at the optimum.
Solved by proximal gradient with backtracking and nonnegative
soft-thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from beamsense.arrays import Codebook


class SolverError(RuntimeError):
    """Raised when the sparse solver fails to converge; carries the last
    iterate and residual for diagnosis."""

    def __init__(self, message, x=None, epsilon=None):
        super().__init__(message)
        self.x = x
        self.epsilon = epsilon


@dataclass(frozen=True)
class RssDictionary:
    """Nonnegative dictionary |W_s^H W_d| (Magnitude) or its entrywise
    square (Power)."""

    atoms: np.ndarray
    norm_mode: str = "Magnitude"

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim != 2:
            raise ValueError("atoms must be a matrix")
        if np.any(a < 0):
            raise ValueError("dictionary entries must be nonnegative")
        if self.norm_mode not in ("Magnitude", "Power"):
            raise ValueError(f"unknown norm_mode {self.norm_mode!r}")
        object.__setattr__(self, "atoms", a)

    @property
    def n_measurements(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_beams(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class L1Config:
    gamma: float = 0.01
    max_iters: int = 5000
    tol: float = 1e-8

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SparseSolution:
    """Nonnegative sparse estimate, its relative residual, and the selected
    beam index (argmax entry)."""

    x: np.ndarray
    epsilon: float
    selected: int
    n_iters: int = 0
    objective: float = np.nan
    trace: tuple | None = None


def exhaustive_predict(y_directional) -> int:
    """argmax_i y_i^2; lowest index on ties."""
    y = np.asarray(y_directional, dtype=float)
    if y.size == 0:
        raise ValueError("empty measurement vector")
    if not np.any(y != 0):
        raise ValueError("all-zero measurement vector")
    return int(np.argmax(y**2))


def build_rss_dictionary(
    sensing: Codebook,
    directional: Codebook,
    norm_mode: str = "Magnitude",
) -> RssDictionary:
    """Entrywise magnitude (or squared magnitude) of W_s^H W_d, ideal array."""
    if sensing.n_elements != directional.n_elements:
        raise ValueError("codebooks must share element count")
    g = np.abs(sensing.weights.conj().T @ directional.weights)
    if norm_mode == "Power":
        g = g**2
    return RssDictionary(atoms=g, norm_mode=norm_mode)


def rss_mp_predict(dictionary: RssDictionary, y, n_iters: int = 1) -> int:
    """Matching pursuit on the measured power vector.

    Each step picks the atom with maximal normalized correlation to the
    residual, removes its least-squares projection, and clips the residual
    at zero (powers cannot go negative).  Returns the first-selected atom,
    i.e. the estimated strongest beam.
    """
    if n_iters < 1:
        raise ValueError("need at least one iteration")
    y = np.asarray(y, dtype=float)
    if y.shape[0] != dictionary.n_measurements:
        raise ValueError("measurement length does not match dictionary")
    if not np.any(y > 0):
        raise ValueError("all-zero measurement vector")
    A = dictionary.atoms
    if dictionary.norm_mode == "Magnitude":
        A = A**2
    resid = y.astype(float) ** 2
    col_norms = np.linalg.norm(A, axis=0)
    col_norms[col_norms == 0] = np.inf
    first = None
    for _ in range(n_iters):
        corr = (A.T @ resid) / col_norms
        k = int(np.argmax(corr))
        if first is None:
            first = k
        coef = (A[:, k] @ resid) / (A[:, k] @ A[:, k])
        resid = np.maximum(resid - coef * A[:, k], 0.0)
        if not np.any(resid > 0):
            break
    return first


def _objective(A, x, y_norm, gamma, y_sq):
    r = A @ x - y_norm
    return gamma * np.sum(x) + (r @ r) / y_sq


def solve_phaseless_l1(
    dictionary: RssDictionary,
    y,
    cfg: L1Config = L1Config(),
    record_trace: bool = False,
) -> SparseSolution:
    """Nonnegative L1-regularized fit of the magnitude measurements.

    Measurements are normalized by their maximum entry before solving.
    Proximal-gradient iterations with backtracking guarantee monotone
    objective descent; stops on relative objective change below cfg.tol.
    """
    y = np.asarray(y, dtype=float)
    ymax = y.max() if y.size else 0.0
    if ymax <= 0:
        raise ValueError("measurements must have a positive maximum")
    if y.shape[0] != dictionary.n_measurements:
        raise ValueError("measurement length does not match dictionary")
    A = dictionary.atoms
    y_norm = y / ymax
    y_sq = float(y_norm @ y_norm)
    gamma = cfg.gamma

    x = np.zeros(dictionary.n_beams)
    # Lipschitz constant of the smooth part: 2 ||A||^2 / ||y~||^2
    lip = 2 * np.linalg.norm(A, 2) ** 2 / y_sq
    step = 1.0 / lip if lip > 0 else 1.0
    obj = _objective(A, x, y_norm, gamma, y_sq)

    def _prox_step(point):
        """One backtracked proximal-gradient step from `point`."""
        r = A @ point - y_norm
        grad = 2 * (A.T @ r) / y_sq
        f_pt = (r @ r) / y_sq
        t = step
        while True:
            # nonnegative soft-threshold: max(v - t*grad - t*gamma, 0)
            cand = np.maximum(point - t * grad - t * gamma, 0.0)
            diff = cand - point
            r_new = A @ cand - y_norm
            f_new = (r_new @ r_new) / y_sq
            if f_new <= f_pt + grad @ diff + (diff @ diff) / (2 * t) + 1e-15:
                return cand, gamma * np.sum(cand) + f_new, f_new
            t *= 0.5
            if t < 1e-18:
                return cand, gamma * np.sum(cand) + f_new, f_new

    # monotone FISTA: accelerated step, but fall back to a plain step from
    # the current iterate whenever momentum would increase the objective
    z = x.copy()
    theta = 1.0
    eps_val = _objective(A, x, y_norm, 0.0, y_sq)
    trace = [obj] if record_trace else None
    for it in range(cfg.max_iters):
        cand, obj_cand, eps_cand = _prox_step(z)
        if obj_cand > obj:
            cand, obj_cand, eps_cand = _prox_step(x)
            theta = 1.0  # restart momentum
        theta_new = (1 + np.sqrt(1 + 4 * theta**2)) / 2
        z = cand + ((theta - 1) / theta_new) * (cand - x)
        z = np.maximum(z, 0.0)
        theta = theta_new
        rel_change = abs(obj - obj_cand) / max(abs(obj), 1e-30)
        x, obj, eps_val = cand, obj_cand, eps_cand
        if trace is not None:
            trace.append(obj)
        if rel_change < cfg.tol:
            return SparseSolution(
                x=x,
                epsilon=float(eps_val),
                selected=int(np.argmax(x)),
                n_iters=it + 1,
                objective=float(obj),
                trace=tuple(trace) if trace is not None else None,
            )
    r = A @ x - y_norm
    raise SolverError(
        f"no convergence in {cfg.max_iters} iterations "
        f"(last objective {obj:.3e})",
        x=x,
        epsilon=float((r @ r) / y_sq),
    )
