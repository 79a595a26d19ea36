"""Time-varying parameter functions and the catalogue of candidate models.

A model couples one of the four distribution families with deterministic
functions of time-to-delivery for its rate parameter (and, beyond the
exponential family, its shape parameter).  Shape functions may not use
more coefficients than rate functions, which prunes the grid of
(rate kind, shape kind) pairs to 11 per multi-parameter family and yields
37 models in total, named ``Family.RateKind.ShapeKind`` (``Family.RateKind``
for the exponential family).

For the generalized families the gamma-style functions ``shape(t)`` and
``rate(t)`` are mapped into location/scale via
``mu(t) = -log(rate(t)/shape(t))`` and ``sigma(t) = 1/sqrt(shape(t))``,
with the extra shape parameters held constant over time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistParams, Exp, Gamma, GenF, GenGam
from .errors import ParameterError

__all__ = [
    "FuncKind",
    "ParamFunc",
    "eval_func",
    "Family",
    "ModelSpec",
    "enumerate_models",
    "model_from_name",
    "instantiate",
    "feasible_on_grid",
]

# Box bounds used by the fitting module.
CONST_BOUNDS = (1e-6, 1e6)
SLOPE_BOUNDS = (-1e4, 1e4)
Q_BOUNDS = (-5.0, 5.0)
P_BOUNDS = (0.0, 50.0)


class FuncKind(str, enum.Enum):
    """Shape of a deterministic parameter function of time."""

    CONST = "Const"
    LIN = "Lin"
    QUADR = "Quadr"
    EXPON = "Expon"

    @property
    def n_coeffs(self) -> int:
        return {"Const": 1, "Lin": 2, "Quadr": 3, "Expon": 3}[self.value]

    @property
    def complexity(self) -> int:
        # quadratic and exponential count as equally complex
        return self.n_coeffs

    @property
    def coeff_names(self) -> tuple[str, ...]:
        return {
            "Const": ("c",),
            "Lin": ("c", "b1"),
            "Quadr": ("c", "b1", "b2"),
            "Expon": ("c", "a1", "a2"),
        }[self.value]


def eval_func(kind: FuncKind, coeffs, t):
    """Evaluate a parameter function at time(s) ``t`` (hours to delivery).

    Vectorized over ``t``; exponential overflow yields ``inf`` which callers
    treat as infeasible.
    """
    t = np.asarray(t, dtype=float)
    if kind is FuncKind.CONST:
        return np.broadcast_to(np.asarray(coeffs[0], dtype=float), t.shape).copy() \
            if t.ndim else float(coeffs[0])
    if kind is FuncKind.LIN:
        return coeffs[0] + coeffs[1] * t
    if kind is FuncKind.QUADR:
        return coeffs[0] + coeffs[1] * t + coeffs[2] * t * t
    with np.errstate(over="ignore"):
        out = coeffs[0] + np.exp(coeffs[1] + coeffs[2] * t)
    return out


@dataclass(frozen=True)
class ParamFunc:
    """A parameter function bound to its coefficients."""

    kind: FuncKind
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) != self.kind.n_coeffs:
            raise ParameterError(
                f"{self.kind.value} takes {self.kind.n_coeffs} coefficients, "
                f"got {len(self.coeffs)}"
            )

    def __call__(self, t):
        return eval_func(self.kind, self.coeffs, t)

    @property
    def complexity(self) -> int:
        return self.kind.complexity


class Family(str, enum.Enum):
    EXP = "Exp"
    GAMMA = "Gamma"
    GENGAM = "GenGam"
    GENF = "GenF"

    @property
    def extra_shape_params(self) -> tuple[str, ...]:
        # constant-over-time distribution shape parameters
        return {"Exp": (), "Gamma": (), "GenGam": ("Q",), "GenF": ("Q", "P")}[self.value]


_KIND_ORDER = [FuncKind.CONST, FuncKind.LIN, FuncKind.QUADR, FuncKind.EXPON]
_FAMILY_ORDER = [Family.EXP, Family.GAMMA, Family.GENGAM, Family.GENF]


@dataclass(frozen=True)
class ModelSpec:
    """One point of the model space: family plus parameter-function kinds.

    The parameter vector layout is fixed as
    ``[rate coefficients | shape coefficients | Q | P]`` with the trailing
    entries present only for the families that use them.
    """

    family: Family
    rate_kind: FuncKind
    shape_kind: FuncKind | None = field(default=None)

    def __post_init__(self):
        if self.family is Family.EXP:
            if self.shape_kind is not None:
                raise ParameterError("exponential models have no shape function")
        else:
            if self.shape_kind is None:
                raise ParameterError(f"{self.family.value} models need a shape function")
            if self.shape_kind.complexity > self.rate_kind.complexity:
                raise ParameterError(
                    "shape function cannot be more complex than the rate function: "
                    f"{self.rate_kind.value}.{self.shape_kind.value}"
                )

    @property
    def name(self) -> str:
        if self.family is Family.EXP:
            return f"Exp.{self.rate_kind.value}"
        return f"{self.family.value}.{self.rate_kind.value}.{self.shape_kind.value}"

    @property
    def rate_slice(self) -> slice:
        return slice(0, self.rate_kind.n_coeffs)

    @property
    def shape_slice(self) -> slice | None:
        if self.shape_kind is None:
            return None
        start = self.rate_kind.n_coeffs
        return slice(start, start + self.shape_kind.n_coeffs)

    @property
    def q_index(self) -> int | None:
        if self.family in (Family.GENGAM, Family.GENF):
            return self.rate_kind.n_coeffs + self.shape_kind.n_coeffs
        return None

    @property
    def p_index(self) -> int | None:
        if self.family is Family.GENF:
            return self.q_index + 1
        return None

    @property
    def n_params(self) -> int:
        n = self.rate_kind.n_coeffs
        if self.shape_kind is not None:
            n += self.shape_kind.n_coeffs
        return n + len(self.family.extra_shape_params)

    @property
    def param_names(self) -> tuple[str, ...]:
        names = [f"rate.{c}" for c in self.rate_kind.coeff_names]
        if self.shape_kind is not None:
            names += [f"shape.{c}" for c in self.shape_kind.coeff_names]
        names += list(self.family.extra_shape_params)
        return tuple(names)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box bounds (lower, upper) aligned with the parameter layout."""
        lo, hi = [], []
        for name in self.param_names:
            if name == "Q":
                b = Q_BOUNDS
            elif name == "P":
                b = P_BOUNDS
            elif name.endswith(".c"):
                b = CONST_BOUNDS
            else:
                b = SLOPE_BOUNDS
            lo.append(b[0])
            hi.append(b[1])
        return np.array(lo), np.array(hi)

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ParameterError(
                f"{self.name} expects {self.n_params} parameters, got shape {theta.shape}"
            )
        return theta

    def rate(self, theta, t):
        theta = self._check_theta(theta)
        return eval_func(self.rate_kind, theta[self.rate_slice], t)

    def shape(self, theta, t):
        if self.shape_kind is None:
            raise ParameterError("exponential models have no shape function")
        theta = self._check_theta(theta)
        return eval_func(self.shape_kind, theta[self.shape_slice], t)


def enumerate_models() -> list[ModelSpec]:
    """The full 37-model catalogue in canonical (table) order."""
    specs: list[ModelSpec] = []
    for family in _FAMILY_ORDER:
        if family is Family.EXP:
            specs.extend(ModelSpec(family, k) for k in _KIND_ORDER)
            continue
        for rate_kind in _KIND_ORDER:
            for shape_kind in _KIND_ORDER:
                if shape_kind.complexity <= rate_kind.complexity:
                    specs.append(ModelSpec(family, rate_kind, shape_kind))
    return specs


def model_from_name(name: str) -> ModelSpec:
    """Parse a canonical ``Family.RateKind[.ShapeKind]`` name."""
    parts = name.split(".")
    try:
        family = Family(parts[0])
        if family is Family.EXP:
            if len(parts) != 2:
                raise ValueError
            return ModelSpec(family, FuncKind(parts[1]))
        if len(parts) != 3:
            raise ValueError
        return ModelSpec(family, FuncKind(parts[1]), FuncKind(parts[2]))
    except ValueError as exc:
        raise ParameterError(f"not a valid model name: {name!r}") from exc


def instantiate(spec: ModelSpec, theta, t: float) -> DistParams:
    """Distribution parameters of ``spec`` at a single time ``t``.

    Raises :class:`ParameterError` when the rate or shape function is
    non-positive (or non-finite) at ``t``.
    """
    theta = spec._check_theta(theta)
    rate = float(spec.rate(theta, t))
    if not (math.isfinite(rate) and rate > 0.0):
        raise ParameterError(f"{spec.name}: rate {rate!r} infeasible at t={t}")
    if spec.family is Family.EXP:
        return Exp(rate)
    shape = float(spec.shape(theta, t))
    if not (math.isfinite(shape) and shape > 0.0):
        raise ParameterError(f"{spec.name}: shape {shape!r} infeasible at t={t}")
    if spec.family is Family.GAMMA:
        return Gamma(shape, rate)
    mu = -math.log(rate / shape)
    sigma = 1.0 / math.sqrt(shape)
    q = float(theta[spec.q_index])
    if spec.family is Family.GENGAM:
        return GenGam(mu, sigma, q)
    return GenF(mu, sigma, q, float(theta[spec.p_index]))


def feasible_on_grid(spec: ModelSpec, theta, t_grid) -> bool:
    """True when rate (and shape) stay positive and finite on ``t_grid``."""
    theta = spec._check_theta(theta)
    rate = np.asarray(spec.rate(theta, t_grid), dtype=float)
    ok = np.all(np.isfinite(rate)) and np.all(rate > 0.0)
    if ok and spec.shape_kind is not None:
        shape = np.asarray(spec.shape(theta, t_grid), dtype=float)
        ok = np.all(np.isfinite(shape)) and np.all(shape > 0.0)
    return bool(ok)
