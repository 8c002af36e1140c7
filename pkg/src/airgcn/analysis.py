"""Numerical study of how activation functions induce feature interactions.

The sigmoid's derivatives are polynomials in the sigmoid itself
(s' = s(1-s)), so its Taylor coefficients at 0 come out as exact rationals.
Expanding s(u + v) to cubic order makes the induced interaction terms
explicit: the coefficient on the u^2 v and u v^2 cross terms is three times
the cubic coefficient, which is -1/48. A least-squares fit on sampled
(u, v) pairs recovers the same numbers empirically for any activation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

MAX_DEGREE = 12

_BASIS = ("1", "u", "v", "u2", "uv", "v2", "u3", "u2v", "uv2", "v3")


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


ACTIVATIONS: dict[str, Callable] = {
    "sigmoid": _sigmoid,
    "relu": lambda t: np.maximum(t, 0.0),
    "identity": lambda t: t,
    "square": lambda t: t * t,
}


def _derivative_polynomials(order: int) -> list[list[Fraction]]:
    """Coefficient lists (in powers of s) of d^p sigmoid / dt^p for p = 0..order.

    Uses d/dt P(s) = P'(s) * (s - s^2), keeping everything rational.
    """
    polys = [[Fraction(0), Fraction(1)]]  # p = 0: the polynomial "s"
    for _ in range(order):
        prev = polys[-1]
        dP = [k * c for k, c in enumerate(prev)][1:]  # P'
        nxt = [Fraction(0)] * (len(prev) + 1)
        for k, c in enumerate(dP):
            nxt[k + 1] += c  # * s
            nxt[k + 2] -= c  # * -s^2
        polys.append(nxt)
    return polys


def _eval_poly_exact(coeffs: list[Fraction], s: Fraction) -> Fraction:
    out = Fraction(0)
    for c in reversed(coeffs):
        out = out * s + c
    return out


def _eval_poly(coeffs, s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    for c in reversed(coeffs):
        out = out * s + float(c)
    return out


def sigmoid_taylor_coeffs_exact(degree: int) -> list[Fraction]:
    """Exact rational Taylor coefficients of the sigmoid about 0."""
    if degree > MAX_DEGREE:
        raise ValueError(f"degree must be at most {MAX_DEGREE}")
    if degree < 0:
        raise ValueError("degree must be non-negative")
    polys = _derivative_polynomials(degree)
    half = Fraction(1, 2)
    return [_eval_poly_exact(polys[p], half) / math.factorial(p)
            for p in range(degree + 1)]


def sigmoid_taylor_coeffs(degree: int) -> np.ndarray:
    """Float view of the exact coefficients; [1/2, 1/4, 0, -1/48, ...]."""
    return np.array([float(c) for c in sigmoid_taylor_coeffs_exact(degree)])


def sigmoid_derivative(order: int, t) -> np.ndarray:
    """d^order sigmoid / dt^order evaluated via the exact polynomial in s."""
    if order > MAX_DEGREE + 1:
        raise ValueError(f"order must be at most {MAX_DEGREE + 1}")
    poly = _derivative_polynomials(order)[order]
    return _eval_poly(poly, _sigmoid(np.asarray(t, dtype=np.float64)))


def taylor_eval(coeffs: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    for c in reversed(coeffs):
        out = out * t + c
    return out


def remainder_bound(t_max: float, degree: int, grid_step: float = 1e-3) -> float:
    """Upper bound on the truncation error of the degree-P expansion on [-t_max, t_max].

    Classic factorial form: t_max^(P+1)/(P+1)! times the maximum magnitude
    of the (P+1)-th derivative, found by dense grid search (step <= 1e-3)
    and inflated by 1% to absorb the grid resolution.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    n_points = max(3, int(np.ceil(2 * t_max / grid_step)) + 1)
    grid = np.linspace(-t_max, t_max, n_points)
    m = float(np.abs(sigmoid_derivative(degree + 1, grid)).max()) * 1.01
    return t_max ** (degree + 1) / math.factorial(degree + 1) * m


@dataclass(frozen=True)
class CrossTermFit:
    """Least-squares fit of activation(u + v) on the cubic two-variable basis."""

    coefficients: dict[str, float]
    residual_rms: float
    n_samples: int
    t_range: float
    offset: float

    @property
    def cubic_cross(self) -> tuple[float, float]:
        """Fitted coefficients of the u^2 v and u v^2 terms."""
        return self.coefficients["u2v"], self.coefficients["uv2"]

    @property
    def implied_cubic(self) -> float:
        """Base cubic coefficient implied by the cross terms (each is 3x it)."""
        return (self.coefficients["u2v"] + self.coefficients["uv2"]) / 6.0

    @property
    def nonlinear_max_abs(self) -> float:
        return max(abs(self.coefficients[k]) for k in _BASIS[3:])


def cross_term_estimate(activation: str | Callable, n_samples: int = 10_000,
                        t_range: float = 0.1, rng=None,
                        offset: float = 0.0) -> CrossTermFit:
    """Fit activation(u + v) on {1, u, v, u^2, uv, v^2, u^3, u^2 v, u v^2, v^3}.

    Samples (u, v) uniformly from the square of half-width t_range centered
    at ``offset`` (an offset strictly above t_range keeps ReLU in its linear
    region). For the sigmoid the recovered u^2 v coefficient is -1/16, i.e.
    three times the cubic coefficient -1/48.
    """
    if isinstance(activation, str):
        activation = ACTIVATIONS[activation]
    rng = np.random.default_rng(0) if rng is None else rng
    u = rng.uniform(offset - t_range, offset + t_range, size=n_samples)
    v = rng.uniform(offset - t_range, offset + t_range, size=n_samples)
    y = np.asarray(activation(u + v), dtype=np.float64)
    design = np.stack([np.ones_like(u), u, v, u * u, u * v, v * v,
                       u ** 3, u * u * v, u * v * v, v ** 3], axis=1)
    # normalize columns so rank reflects geometry, not the tiny t_range scale
    col_scale = np.abs(design).max(axis=0)
    coef, _, rank, _ = np.linalg.lstsq(design / col_scale, y, rcond=None)
    if rank < design.shape[1]:
        raise ValueError("ill-conditioned cross-term fit; widen t_range or add samples")
    coef = coef / col_scale
    residual = y - design @ coef
    return CrossTermFit(coefficients=dict(zip(_BASIS, coef.tolist())),
                        residual_rms=float(np.sqrt(np.mean(residual ** 2))),
                        n_samples=n_samples, t_range=t_range, offset=offset)


@dataclass(frozen=True)
class TaylorReport:
    """Everything the `taylor` command reports."""

    degree: int
    coefficients: np.ndarray
    coefficients_exact: list[Fraction]
    t_max: float
    remainder: float
    cross_fit: CrossTermFit

    def lines(self) -> list[str]:
        out = [f"sigmoid expansion about 0, degree {self.degree}",
               f"  {'p':>2}  {'coefficient':>18}  exact"]
        for p, (c, cx) in enumerate(zip(self.coefficients, self.coefficients_exact)):
            out.append(f"  {p:>2}  {c:>18.12f}  {cx}")
        out.append(f"remainder bound on |t| <= {self.t_max:g}: {self.remainder:.3e}")
        fit = self.cross_fit
        out.append(f"cross-term fit (sigmoid, {fit.n_samples} samples, "
                   f"range {fit.t_range:g}):")
        u2v_note = ""
        if self.degree >= 3:
            u2v_note = f"   (expected 3 * c3 = {3 * float(self.coefficients_exact[3]):+.6f})"
        out.append(f"  u^2 v coefficient: {fit.coefficients['u2v']:+.6f}{u2v_note}")
        out.append(f"  u v^2 coefficient: {fit.coefficients['uv2']:+.6f}")
        out.append(f"  implied cubic coefficient: {fit.implied_cubic:+.6f}   "
                   f"(|c3| bound 1/48 = {1 / 48:.6f})")
        out.append(f"  fit rms residual: {fit.residual_rms:.2e}")
        return out

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "coefficients": [float(c) for c in self.coefficients],
            "coefficients_exact": [str(c) for c in self.coefficients_exact],
            "t_max": self.t_max,
            "remainder_bound": self.remainder,
            "cross_terms": {
                "u2v": self.cross_fit.coefficients["u2v"],
                "uv2": self.cross_fit.coefficients["uv2"],
                "implied_cubic": self.cross_fit.implied_cubic,
                "residual_rms": self.cross_fit.residual_rms,
                "n_samples": self.cross_fit.n_samples,
                "t_range": self.cross_fit.t_range,
            },
        }


def taylor_report(degree: int = 3, t_max: float = 0.1,
                  n_samples: int = 10_000, seed: int = 0) -> TaylorReport:
    exact = sigmoid_taylor_coeffs_exact(degree)
    fit = cross_term_estimate("sigmoid", n_samples=n_samples, t_range=t_max,
                              rng=np.random.default_rng(seed))
    return TaylorReport(degree=degree,
                        coefficients=np.array([float(c) for c in exact]),
                        coefficients_exact=exact,
                        t_max=t_max,
                        remainder=remainder_bound(t_max, degree),
                        cross_fit=fit)
