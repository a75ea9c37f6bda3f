"""Scalar formulas: isoradial edge weights, duality and star-triangle
relations, drift constants and quantum rates.

All functions are pure and work in 64-bit floats. Angles are in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Q4_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    q: float
    beta: float = 1.0

    def __post_init__(self):
        if not (self.q >= 1.0) or not math.isfinite(self.q):
            raise ValueError(f"cluster weight q must be >= 1, got {self.q}")
        if not (self.beta > 0.0) or not math.isfinite(self.beta):
            raise ValueError(f"beta must be > 0, got {self.beta}")

    @property
    def regime(self) -> str:
        return regime(self.q)


@dataclass(frozen=True)
class EdgeWeight:
    theta: float
    y: float
    p: float


@dataclass(frozen=True)
class TripleWeights:
    y_a: float
    y_b: float
    y_c: float

    def __post_init__(self):
        if min(self.y_a, self.y_b, self.y_c) <= 0:
            raise ValueError("triple weights must be strictly positive")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.y_a, self.y_b, self.y_c)


@dataclass(frozen=True)
class DriftConstants:
    eta: float
    delta: float
    zeta: float
    r: float


@dataclass(frozen=True)
class QuantumRates:
    lambda0: float
    mu0: float
    zeta: float

    def __iter__(self):
        return iter((self.lambda0, self.mu0, self.zeta))


def _as_params(params, beta=None) -> ModelParams:
    if isinstance(params, ModelParams):
        return params if beta is None else ModelParams(params.q, beta)
    return ModelParams(float(params), 1.0 if beta is None else float(beta))


def regime(q: float) -> str:
    """One of 'q<4', 'q=4', 'q>4' (with a 1e-9 guard band around 4)."""
    if abs(q - 4.0) < Q4_TOL:
        return "q=4"
    return "q<4" if q < 4.0 else "q>4"


def spectral_r(q: float) -> float:
    """r = arccos(sqrt(q)/2)/pi for q<4, arccosh(sqrt(q)/2)/pi for q>4.

    At q=4 both expressions vanish; 0.0 is returned and the q=4 weight
    formula does not use r.
    """
    if not (q >= 1.0):
        raise ValueError(f"q must be >= 1, got {q}")
    reg = regime(q)
    if reg == "q=4":
        return 0.0
    if reg == "q<4":
        return math.acos(math.sqrt(q) / 2.0) / math.pi
    return math.acosh(math.sqrt(q) / 2.0) / math.pi


def odds(theta, q: float, beta: float = 1.0):
    """Vectorised odds y(theta) for an array of angles (no validation)."""
    theta = np.asarray(theta, dtype=float)
    reg = regime(q)
    if reg == "q=4":
        y = 2.0 * (np.pi - theta) / theta
    else:
        r = spectral_r(q)
        f = np.sin if reg == "q<4" else np.sinh
        y = math.sqrt(q) * f(r * (np.pi - theta)) / f(r * theta)
    return beta * y


def edge_weight(theta: float, params, beta: float | None = None) -> EdgeWeight:
    """Weight of an edge subtending ``theta``.

    ``params`` is a :class:`ModelParams` or a bare q (then ``beta`` defaults
    to 1).
    """
    mp = _as_params(params, beta)
    if not (0.0 < theta < math.pi):
        raise ValueError(f"theta must lie in (0, pi), got {theta}")
    y = float(odds(theta, mp.q, mp.beta))
    return EdgeWeight(theta=float(theta), y=y, p=y / (1.0 + y))


def dual_edge_weight(theta: float, params, beta: float | None = None) -> EdgeWeight:
    """Weight of the dual edge: angle pi - theta and multiplier 1/beta."""
    mp = _as_params(params, beta)
    if not (0.0 < theta < math.pi):
        raise ValueError(f"theta must lie in (0, pi), got {theta}")
    return edge_weight(math.pi - theta, ModelParams(mp.q, 1.0 / mp.beta))


def triple_from_angles(a: float, b: float, c: float, q: float) -> TripleWeights:
    return TripleWeights(*(edge_weight(t, q).y for t in (a, b, c)))


def triangle_residual(w: TripleWeights, q: float) -> float:
    ya, yb, yc = w.as_tuple()
    return ya * yb * yc + ya * yb + yb * yc + yc * ya - q


def star_residual(w: TripleWeights, q: float) -> float:
    ya, yb, yc = w.as_tuple()
    return ya * yb * yc - q * (ya + yb + yc) - q * q


def star_from_triangle(w: TripleWeights, q: float) -> TripleWeights:
    """Componentwise y' = q / y (an involution)."""
    return TripleWeights(*(q / y for y in w.as_tuple()))


def _check_drift_angles(A: float, B: float) -> None:
    if not (0.0 < A < math.pi and 0.0 < B - A < math.pi):
        raise ValueError(f"infeasible angle pair A={A}, B={B}")


def drift_eta(A: float, B: float, q: float) -> float:
    """Product form y_{pi-A} y_{pi-(B-A)} / q, valid for every q >= 1."""
    _check_drift_angles(A, B)
    return edge_weight(math.pi - A, q).y * edge_weight(math.pi - (B - A), q).y / q


def drift_eta_sine(A: float, B: float, q: float) -> float:
    """Sine form of the drift probability (q < 4 only)."""
    _check_drift_angles(A, B)
    if regime(q) != "q<4":
        raise ValueError("sine form is only defined for q < 4")
    r = spectral_r(q)
    s = math.sin
    return s(r * A) * s(r * (B - A)) / (s(r * (math.pi - A)) * s(r * (math.pi - (B - A))))


def drift_eta_cosine(A: float, B: float, q: float) -> float:
    """Cosine form of the drift probability (q < 4 only)."""
    _check_drift_angles(A, B)
    if regime(q) != "q<4":
        raise ValueError("cosine form is only defined for q < 4")
    r = spectral_r(q)
    c = math.cos
    num = c(r * (2 * A - B)) - c(r * B)
    den = c(r * (2 * A - B)) - c(r * (2 * math.pi - B))
    return num / den


def drift_delta(eps: float, q: float) -> float:
    """delta = 1/2 min{ y_{pi-eps} p_{pi-eps} (1 - p_eps) / q, 1 }."""
    if not (0.0 < eps <= math.pi / 2 + 1e-15):
        raise ValueError(f"eps must lie in (0, pi/2], got {eps}")
    eps = min(eps, math.pi / 2)
    far = edge_weight(math.pi - eps, q)
    near = edge_weight(eps, q)
    return 0.5 * min(far.y * far.p * (1.0 - near.p) / q, 1.0)


def zeta(q: float) -> float:
    return 2.0 * math.sqrt(2.0 + math.sqrt(q)) / math.pi**2


def quantum_rates(q: float) -> QuantumRates:
    """Small-angle rates: 1 - p_eps ~ lambda0 eps and p_{pi-eps} ~ mu0 eps."""
    if not (q >= 1.0):
        raise ValueError(f"q must be >= 1, got {q}")
    reg = regime(q)
    if reg == "q=4":
        lam, mu = 1.0 / (2.0 * math.pi), 2.0 / math.pi
    else:
        r = spectral_r(q)
        gap = math.sqrt(abs(4.0 - q))
        lam = 2.0 * r / (math.sqrt(q) * gap)
        mu = 2.0 * r * math.sqrt(q) / gap
    return QuantumRates(lambda0=lam, mu0=mu, zeta=zeta(q))


def drift_constants(eps: float, q: float, n_grid: int = 64) -> DriftConstants:
    """Bundle eta (sup over transverse angles eps <= A < B <= pi - eps on a
    grid), delta, zeta and r."""
    grid = np.linspace(eps, math.pi - eps, n_grid)
    eta = 0.0
    for a, A in enumerate(grid):
        for B in grid[a + 1:]:
            eta = max(eta, drift_eta(A, B, q))
    return DriftConstants(eta=eta, delta=drift_delta(eps, q), zeta=zeta(q), r=spectral_r(q))
