"""Finite spectral truncation of the Hilbert scale.

Operators are diagonal in one shared orthonormal eigenbasis and are stored as their
descending eigenvalue sequences.  States are :class:`SpectralVector`s that carry a
representation flag: ``"eigen"`` coordinates (orthonormal for the weighted inner
product) or ``"grid"`` values (inner product ``weight * sum(x * y)``).  A
:class:`SpectralBasis` converts between the two.

Every operation accepts arrays with leading batch dimensions; the mode index is
always the last axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Tuple, Union

import numpy as np

from .errors import DimensionMismatchError, ModeSplitError, RepresentationError
from .rng import RngStream

__all__ = [
    "EIGEN",
    "GRID",
    "SobolevIndex",
    "ModeSplit",
    "SpectralOperator",
    "SpectralVector",
    "SpectralBasis",
    "coefficients_of",
    "hs_inner",
    "hs_norm",
    "sample_gaussian",
    "weighted_trace",
    "split",
    "dumps",
    "loads",
]

EIGEN = "eigen"
GRID = "grid"

# relative slack for the non-increasing check; analytic formulas produce exact ties
_ORDER_RTOL = 1e-12


@dataclass(frozen=True)
class SobolevIndex:
    s: float = 0.0

    def __post_init__(self) -> None:
        if not self.s < 1.0:
            raise ValueError(f"Sobolev index must satisfy s < 1, got {self.s}")


@dataclass(frozen=True)
class ModeSplit:
    """Number of low modes; modes ``0..n-1`` are low, the rest high."""

    n: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ModeSplitError(int(self.n), -1)

    def validate(self, dim: int) -> "ModeSplit":
        if self.n > dim:
            raise ModeSplitError(self.n, dim)
        return self

    def low_mask(self, dim: int) -> np.ndarray:
        self.validate(dim)
        mask = np.zeros(dim, dtype=bool)
        mask[: self.n] = True
        return mask


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Positive symmetric operator given by descending eigenvalues.

    Attributes:
        eigenvalues: Strictly positive, non-increasing.
        label: Free-form name (``"C"``, ``"C_tilde"``, ``"tps-discrete"``...).
        analytic_trace: Trace of the untruncated operator when known in closed form.
    """

    eigenvalues: np.ndarray
    label: str = ""
    analytic_trace: float | None = None

    def __post_init__(self) -> None:
        values = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if values.size == 0:
            raise ValueError("SpectralOperator needs at least one eigenvalue")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError(f"eigenvalues of {self.label or 'operator'} must be finite and strictly positive")
        if np.any(values[1:] > values[:-1] * (1.0 + _ORDER_RTOL)):
            raise ValueError(f"eigenvalues of {self.label or 'operator'} must be non-increasing")
        values.setflags(write=False)
        object.__setattr__(self, "eigenvalues", values)

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.size)

    def power(self, p: float) -> np.ndarray:
        """Eigenvalues raised to *p* (diagonal of ``C**p``)."""
        if p == 0:
            return np.ones_like(self.eigenvalues)
        return self.eigenvalues**p

    def apply(self, coefficients: np.ndarray, p: float = 1.0) -> np.ndarray:
        """``C**p`` applied to eigen coordinates (last axis)."""
        coefficients = np.asarray(coefficients, dtype=float)
        _check_dim(coefficients, self.dim, self.label or "operator")
        return coefficients * self.power(p)

    def trace(self, p: float = 1.0) -> float:
        return float(np.sum(self.power(p)))

    def to_dict(self, hex_floats: bool = False) -> Dict[str, Any]:
        return {
            "label": self.label,
            "eigenvalues": _encode_floats(self.eigenvalues, hex_floats),
            "analytic_trace": self.analytic_trace,
            "encoding": "hex" if hex_floats else "decimal",
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpectralOperator":
        return cls(
            eigenvalues=_decode_floats(data["eigenvalues"]),
            label=data.get("label", ""),
            analytic_trace=data.get("analytic_trace"),
        )

    def __repr__(self) -> str:
        return f"SpectralOperator(label={self.label!r}, dim={self.dim}, lambda_1={self.eigenvalues[0]:.6g})"


@dataclass(frozen=True, eq=False)
class SpectralVector:
    """State vector (possibly batched) in eigen coordinates or grid values."""

    coefficients: np.ndarray
    weight: float = 1.0
    representation: str = EIGEN

    def __post_init__(self) -> None:
        coefficients = np.asarray(self.coefficients, dtype=float)
        if coefficients.ndim == 0:
            coefficients = coefficients.reshape(1)
        if self.representation not in (EIGEN, GRID):
            raise RepresentationError(f"unknown representation '{self.representation}'")
        if not self.weight > 0:
            raise ValueError(f"quadrature weight must be positive, got {self.weight}")
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def dim(self) -> int:
        return int(self.coefficients.shape[-1])

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return tuple(self.coefficients.shape[:-1])

    def replace(self, coefficients: np.ndarray) -> "SpectralVector":
        return SpectralVector(coefficients, self.weight, self.representation)

    def inner(self, other: "SpectralVector") -> np.ndarray | float:
        """Inner product of the ambient weighted space."""
        _check_same(self, other)
        raw = np.sum(self.coefficients * other.coefficients, axis=-1)
        if self.representation == GRID:
            raw = self.weight * raw
        return _scalar(raw)

    def __add__(self, other: "SpectralVector") -> "SpectralVector":
        _check_same(self, other)
        return self.replace(self.coefficients + other.coefficients)

    def __sub__(self, other: "SpectralVector") -> "SpectralVector":
        _check_same(self, other)
        return self.replace(self.coefficients - other.coefficients)

    def __neg__(self) -> "SpectralVector":
        return self.replace(-self.coefficients)

    def scaled(self, factor: float | np.ndarray) -> "SpectralVector":
        factor = np.asarray(factor, dtype=float)
        if factor.ndim:
            factor = factor[..., None]
        return self.replace(factor * self.coefficients)

    def to_dict(self, hex_floats: bool = False) -> Dict[str, Any]:
        return {
            "coefficients": _encode_floats(self.coefficients, hex_floats),
            "shape": list(self.coefficients.shape),
            "weight": float.hex(self.weight) if hex_floats else self.weight,
            "representation": self.representation,
            "encoding": "hex" if hex_floats else "decimal",
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpectralVector":
        weight = data.get("weight", 1.0)
        if isinstance(weight, str):
            weight = float.fromhex(weight)
        coefficients = _decode_floats(data["coefficients"]).reshape(data.get("shape", [-1]))
        return cls(coefficients, float(weight), data.get("representation", EIGEN))


VectorLike = Union[SpectralVector, np.ndarray]


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Analytic eigenbasis sampled on a grid of ``points`` nodes with ``components`` each.

    ``matrix[k, j]`` is basis function *k* at node *j*, orthonormal for the weighted
    inner product ``weight * sum``.  Flat state arrays are laid out node-major
    (node *j*, component *c* at ``j * components + c``) on the grid and mode-major in
    eigen coordinates, so eigen coordinate ``k * components + c`` pairs basis function
    *k* with component *c*.

    ``forward``/``inverse`` are optional fast transforms acting on arrays of shape
    ``(..., points, components)``; the dense matrix path is the default.
    """

    matrix: np.ndarray
    weight: float
    components: int
    forward: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    inverse: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    use_fast: bool = False

    @property
    def points(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def dim(self) -> int:
        return self.points * self.components

    def to_eigen(self, values: VectorLike) -> np.ndarray:
        """Grid values to eigen coordinates (``weight * E @ X`` per component)."""
        flat = _as_array(values, expect=GRID)
        _check_dim(flat, self.dim, "grid vector")
        grid = flat.reshape(flat.shape[:-1] + (self.points, self.components))
        if self.use_fast and self.forward is not None:
            coeffs = self.forward(grid)
        else:
            coeffs = self.weight * (self.matrix @ grid)
        return coeffs.reshape(flat.shape)

    def to_grid(self, coefficients: VectorLike) -> np.ndarray:
        flat = _as_array(coefficients, expect=EIGEN)
        _check_dim(flat, self.dim, "eigen vector")
        coeffs = flat.reshape(flat.shape[:-1] + (self.points, self.components))
        if self.use_fast and self.inverse is not None:
            grid = self.inverse(coeffs)
        else:
            grid = self.matrix.T @ coeffs
        return grid.reshape(flat.shape)

    def eigen_vector(self, grid: SpectralVector) -> SpectralVector:
        if grid.representation != GRID:
            raise RepresentationError("expected grid values")
        return SpectralVector(self.to_eigen(grid.coefficients), grid.weight, EIGEN)

    def grid_vector(self, eigen: SpectralVector) -> SpectralVector:
        if eigen.representation != EIGEN:
            raise RepresentationError("expected eigen coordinates")
        return SpectralVector(self.to_grid(eigen.coefficients), self.weight, GRID)


# --------------------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------------------


def coefficients_of(x: VectorLike) -> np.ndarray:
    """Eigen coordinates of *x* as a float array (plain arrays pass through)."""
    return _as_array(x, expect=EIGEN)


def hs_inner(x: VectorLike, y: VectorLike, C: SpectralOperator, s: SobolevIndex | float = 0.0) -> np.ndarray | float:
    """``sum_j lambda_j**(-s) x_j y_j`` over the last axis."""
    s_val = s.s if isinstance(s, SobolevIndex) else float(s)
    xc = coefficients_of(x)
    yc = coefficients_of(y)
    _check_dim(xc, C.dim, "hs_inner x")
    _check_dim(yc, C.dim, "hs_inner y")
    return _scalar(np.sum(C.power(-s_val) * xc * yc, axis=-1))


def hs_norm(x: VectorLike, C: SpectralOperator, s: SobolevIndex | float = 0.0) -> np.ndarray | float:
    return np.sqrt(hs_inner(x, x, C, s))


def sample_gaussian(
    C_tilde: SpectralOperator,
    rng: RngStream,
    size: int | Tuple[int, ...] | None = None,
    weight: float = 1.0,
) -> SpectralVector:
    """Draw ``xi_j = sqrt(lambda_j) * rho_j`` with i.i.d. standard normal ``rho``."""
    batch = () if size is None else ((size,) if isinstance(size, int) else tuple(size))
    rho = rng.standard_normal(batch + (C_tilde.dim,))
    return SpectralVector(np.sqrt(C_tilde.eigenvalues) * rho, weight, EIGEN)


def weighted_trace(C_tilde: SpectralOperator, C: SpectralOperator, s: SobolevIndex | float = 0.0) -> float:
    """``trace(C_tilde C**(-s))`` over the truncation."""
    if C_tilde.dim != C.dim:
        raise DimensionMismatchError("weighted_trace", C.dim, C_tilde.dim)
    s_val = s.s if isinstance(s, SobolevIndex) else float(s)
    return float(np.sum(C_tilde.eigenvalues * C.power(-s_val)))


def split(x: VectorLike, mode_split: ModeSplit) -> Tuple[SpectralVector, SpectralVector]:
    """Orthogonal projections onto the low modes ``0..n-1`` and the remaining high modes."""
    if isinstance(x, SpectralVector):
        template = x
    else:
        template = SpectralVector(np.asarray(x, dtype=float))
    coeffs = coefficients_of(template)
    mask = mode_split.low_mask(coeffs.shape[-1])
    low = np.where(mask, coeffs, 0.0)
    high = np.where(mask, 0.0, coeffs)
    return template.replace(low), template.replace(high)


# --------------------------------------------------------------------------------------
# JSON documents
# --------------------------------------------------------------------------------------


def dumps(obj: SpectralOperator | SpectralVector, hex_floats: bool = False) -> str:
    kind = "operator" if isinstance(obj, SpectralOperator) else "vector"
    return json.dumps({"kind": kind, **obj.to_dict(hex_floats)}, sort_keys=True)


def loads(text: str) -> SpectralOperator | SpectralVector:
    data = json.loads(text)
    if data.get("kind") == "operator":
        return SpectralOperator.from_dict(data)
    return SpectralVector.from_dict(data)


def _encode_floats(values: np.ndarray, hex_floats: bool) -> list:
    flat = np.asarray(values, dtype=float).reshape(-1)
    if hex_floats:
        return [float.hex(float(v)) for v in flat]
    return [float(v) for v in flat]


def _decode_floats(values: list) -> np.ndarray:
    return np.array([float.fromhex(v) if isinstance(v, str) else float(v) for v in values], dtype=float)


# --------------------------------------------------------------------------------------
# Internal helpers
# --------------------------------------------------------------------------------------


def _as_array(x: VectorLike, expect: str) -> np.ndarray:
    if isinstance(x, SpectralVector):
        if x.representation != expect:
            raise RepresentationError(f"expected {expect} representation, got {x.representation}")
        return x.coefficients
    return np.asarray(x, dtype=float)


def _check_dim(values: np.ndarray, dim: int, what: str) -> None:
    if values.shape[-1] != dim:
        raise DimensionMismatchError(what, dim, int(values.shape[-1]))


def _check_same(a: SpectralVector, b: SpectralVector) -> None:
    if a.dim != b.dim:
        raise DimensionMismatchError("vector pair", a.dim, b.dim)
    if a.representation != b.representation:
        raise RepresentationError("vectors use different representations")


def _scalar(value: np.ndarray) -> np.ndarray | float:
    return float(value) if np.ndim(value) == 0 else value
