"""Discounted value iteration on a discretized belief square.

The square [0,1]^2 of per-channel beliefs is covered by a uniform lattice;
the fixed point of the four-action Bellman operator is computed by Jacobi
sweeps, with bilinear interpolation supplying values at off-lattice
continuation beliefs. The sweep is written so that a symmetric field stays
bit-exactly symmetric, which the downstream mirror checks depend on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ACTION_PRIORITY,
    Action,
    Belief,
    ChannelParams,
    Discount,
    EconParams,
    ParameterError,
    propagate,
    propagate_array,
)

__all__ = [
    "BeliefGrid",
    "ValueField",
    "SolverConfig",
    "SolveResult",
    "NonConvergence",
    "ValueFileError",
    "interpolate",
    "q_balanced",
    "q_bet1",
    "q_bet2",
    "q_conservative",
    "action_value_grids",
    "bellman_backup",
    "solve",
    "value_bounds",
    "save_value_field",
    "load_value_field",
]


class NonConvergence(RuntimeError):
    """Sweep budget exhausted before the sup-norm step reached tolerance."""

    def __init__(self, iterations, residual, tol):
        super().__init__(
            f"no convergence after {iterations} sweeps: residual {residual:.3e} > tol {tol:.3e}"
        )
        self.iterations = iterations
        self.residual = residual
        self.tol = tol


class ValueFileError(ValueError):
    """A value-field file does not match the documented layout."""


@dataclass(frozen=True)
class BeliefGrid:
    """Uniform n x n lattice over the belief square, corners included."""

    n: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise ParameterError(f"grid size n >= 2 violated: n={self.n!r}")
        pts = np.arange(self.n, dtype=np.float64) / (self.n - 1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def spacing(self):
        return 1.0 / (self.n - 1)


@dataclass(frozen=True, eq=False)
class ValueField:
    """One value per lattice point.

    values[i, j] belongs to the belief (points[i], points[j]); the first
    index runs along the first channel. The array is frozen to keep sweeps
    honest about not updating in place.
    """

    grid: BeliefGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, order="C")
        if vals.shape != (self.grid.n, self.grid.n):
            raise ParameterError(
                f"values shape {vals.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(vals)):
            raise ParameterError("values must all be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SolverConfig:
    discount: Discount
    tol: float = 1e-6
    max_iter: int = 5000

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ParameterError(f"tol > 0 violated: tol={self.tol!r}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter >= 1 violated: max_iter={self.max_iter!r}")


@dataclass(frozen=True)
class SolveResult:
    field: ValueField
    iterations: int
    residual: float


def _locate(points, q):
    # Cell index plus intra-cell coordinate. The fraction is normalized by
    # the actual cell width so lattice queries come out exactly 0 or 1 and
    # reproduce stored values bit for bit.
    q = np.asarray(q, dtype=np.float64)
    idx = np.searchsorted(points, q, side="right") - 1
    idx = np.clip(idx, 0, points.size - 2)
    frac = (q - points[idx]) / (points[idx + 1] - points[idx])
    return idx, frac


def _tensor_interp(values, points, qx, qy):
    # Bilinear interpolation on the tensor product qx x qy. The four corner
    # terms are summed diagonal pair first: on a symmetric field this makes
    # transposed queries agree bit for bit (addition commutes, it only fails
    # to associate), which the mirror-symmetry guarantees rely on.
    ix, fx = _locate(points, np.asarray(qx, dtype=np.float64))
    iy, fy = _locate(points, np.asarray(qy, dtype=np.float64))
    wx0 = (1.0 - fx)[:, None]
    wx1 = fx[:, None]
    wy0 = (1.0 - fy)[None, :]
    wy1 = fy[None, :]
    v00 = values[np.ix_(ix, iy)]
    v01 = values[np.ix_(ix, iy + 1)]
    v10 = values[np.ix_(ix + 1, iy)]
    v11 = values[np.ix_(ix + 1, iy + 1)]
    return (wx0 * wy0 * v00 + wx1 * wy1 * v11) + (wx0 * wy1 * v01 + wx1 * wy0 * v10)


def interpolate(v, b):
    """Bilinearly interpolated field value at an arbitrary belief."""
    out = _tensor_interp(v.values, v.grid.points, np.array([b.p1]), np.array([b.p2]))
    return float(out[0, 0])


def _corner_values(v, ch):
    lam = np.array([ch.lambda0, ch.lambda1])
    c = _tensor_interp(v.values, v.grid.points, lam, lam)
    return c[0, 0], c[0, 1], c[1, 0], c[1, 1]


def q_balanced(v, b, ch, econ, discount):
    """Action value of splitting power across both channels."""
    v00, v01, v10, v11 = _corner_values(v, ch)
    cont = (((1.0 - b.p1) * (1.0 - b.p2)) * v00 + (b.p1 * b.p2) * v11) + (
        (b.p1 * (1.0 - b.p2)) * v10 + ((1.0 - b.p1) * b.p2) * v01
    )
    return (b.p1 + b.p2) * (econ.rl + econ.cl) - 2.0 * econ.cl + discount.beta * cont


def q_bet1(v, b, ch, econ, discount):
    """Action value of putting all power on channel 1."""
    t2 = propagate(b.p2, ch)
    lam = np.array([ch.lambda0, ch.lambda1])
    e = _tensor_interp(v.values, v.grid.points, lam, np.array([t2]))[:, 0]
    cont = b.p1 * e[1] + (1.0 - b.p1) * e[0]
    return (econ.rh + econ.ch) * b.p1 - econ.ch + discount.beta * cont


def q_bet2(v, b, ch, econ, discount):
    """Action value of putting all power on channel 2."""
    t1 = propagate(b.p1, ch)
    lam = np.array([ch.lambda0, ch.lambda1])
    e = _tensor_interp(v.values, v.grid.points, np.array([t1]), lam)[0, :]
    cont = b.p2 * e[1] + (1.0 - b.p2) * e[0]
    return (econ.rh + econ.ch) * b.p2 - econ.ch + discount.beta * cont


def q_conservative(v, b, ch, discount):
    """Action value of resting: no reward, beliefs drift toward stationary."""
    nxt = Belief(propagate(b.p1, ch), propagate(b.p2, ch))
    return discount.beta * interpolate(v, nxt)


def action_value_grids(v, ch, econ, discount):
    """Q grid for every action, evaluated against the frozen field v.

    Returns a dict ordered like ACTION_PRIORITY. The bet grids are exact
    transposes of each other whenever v is symmetric; see _tensor_interp.
    """
    x = v.grid.points
    vals = v.values
    beta = discount.beta
    tx = propagate_array(x, ch)
    lam = np.array([ch.lambda0, ch.lambda1])

    c = _tensor_interp(vals, x, lam, lam)
    v00, v01, v10, v11 = c[0, 0], c[0, 1], c[1, 0], c[1, 1]
    row = _tensor_interp(vals, x, lam, tx)   # row[k, j] = V(lambda_k, T(x_j))
    col = _tensor_interp(vals, x, tx, lam)   # col[i, k] = V(T(x_i), lambda_k)
    rest = _tensor_interp(vals, x, tx, tx)   # rest[i, j] = V(T(x_i), T(x_j))

    p1 = x[:, None]
    p2 = x[None, :]

    q_bb = (p1 + p2) * (econ.rl + econ.cl) - 2.0 * econ.cl + beta * (
        (((1.0 - p1) * (1.0 - p2)) * v00 + (p1 * p2) * v11)
        + ((p1 * (1.0 - p2)) * v10 + ((1.0 - p1) * p2) * v01)
    )
    q_b1 = (econ.rh + econ.ch) * p1 - econ.ch + beta * (
        p1 * row[1][None, :] + (1.0 - p1) * row[0][None, :]
    )
    q_b2 = (econ.rh + econ.ch) * p2 - econ.ch + beta * (
        p2 * col[:, 1][:, None] + (1.0 - p2) * col[:, 0][:, None]
    )
    q_br = beta * rest

    return {
        Action.BALANCED: q_bb,
        Action.BET1: q_b1,
        Action.BET2: q_b2,
        Action.CONSERVATIVE: q_br,
    }


def bellman_backup(v, ch, econ, discount):
    """One Jacobi sweep: pointwise max of the four Q grids against v.

    The input field is read only; a fresh field is returned, so results do
    not depend on any evaluation order.
    """
    q = action_value_grids(v, ch, econ, discount)
    return ValueField(v.grid, np.maximum.reduce([q[a] for a in ACTION_PRIORITY]))


def solve(cfg, ch, econ, grid):
    """Iterate bellman_backup from the zero field until the sup-norm step
    falls to cfg.tol.

    Raises NonConvergence when max_iter sweeps are not enough, which points
    at beta close to one or an overtight tolerance.
    """
    v = ValueField(grid, np.zeros((grid.n, grid.n)))
    residual = np.inf
    for iteration in range(1, cfg.max_iter + 1):
        nxt = bellman_backup(v, ch, econ, cfg.discount)
        residual = float(np.max(np.abs(nxt.values - v.values)))
        v = nxt
        if residual <= cfg.tol:
            if float(v.values.min()) < -cfg.tol:
                # Resting forever guarantees zero, so a negative value is a bug.
                raise RuntimeError(
                    f"converged field has negative values (min {v.values.min():.3e})"
                )
            return SolveResult(v, iteration, residual)
    raise NonConvergence(cfg.max_iter, residual, cfg.tol)


def value_bounds(econ, discount):
    """Coarse analytic bounds from the extreme per-slot rewards."""
    worst = -2.0 * econ.cl
    best = max(econ.rh, 2.0 * econ.rl)
    return worst / (1.0 - discount.beta), best / (1.0 - discount.beta)


_LAYOUT_NOTE = (
    "row-major: values[i*n + j] is the value at belief (i/(n-1), j/(n-1)); "
    "index i runs along the first channel's belief"
)


def save_value_field(path, result, ch, econ, discount):
    """Write a solved field plus its parameters as a single JSON document."""
    doc = {
        "layout": _LAYOUT_NOTE,
        "n": result.field.grid.n,
        "lambda0": ch.lambda0,
        "lambda1": ch.lambda1,
        "rh": econ.rh,
        "rl": econ.rl,
        "ch": econ.ch,
        "cl": econ.cl,
        "beta": discount.beta,
        "iterations": result.iterations,
        "residual": result.residual,
        "values": [float(x) for x in result.field.values.ravel()],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_value_field(path):
    """Inverse of save_value_field.

    Returns (SolveResult, ChannelParams, EconParams, Discount).
    """
    with open(path) as fh:
        doc = json.load(fh)
    try:
        n = int(doc["n"])
        ch = ChannelParams(doc["lambda0"], doc["lambda1"])
        econ = EconParams(doc["rh"], doc["rl"], doc["ch"], doc["cl"])
        discount = Discount(doc["beta"])
        values = np.asarray(doc["values"], dtype=np.float64)
        iterations = int(doc["iterations"])
        residual = float(doc["residual"])
    except KeyError as exc:
        raise ValueFileError(f"value file {path}: missing key {exc}") from exc
    if values.size != n * n:
        raise ValueFileError(
            f"value file {path}: expected {n * n} values, found {values.size}"
        )
    fld = ValueField(BeliefGrid(n), values.reshape(n, n))
    return SolveResult(fld, iterations, residual), ch, econ, discount
