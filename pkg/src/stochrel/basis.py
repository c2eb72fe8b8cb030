"""Orthonormal polynomial bases with hyperbolic multi-index truncation.

Hermite polynomials (probabilists', normalized against N(0,1)) pair with
Gaussian-standardized inputs; Legendre polynomials (normalized against
Uniform(-1,1)) pair with CDF-standardized ones. Multi-index sets use the
hyperbolic q-norm truncation with a deterministic graded ordering so that
coefficient vectors are portable across runs and files.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["BasisSpec", "generate_multi_indices", "eval_univariate", "gauss_nodes"]

POLY_FAMILIES = ("hermite", "legendre")

_NORM_TOL = 1e-12


def generate_multi_indices(dim: int, p: int, q: float) -> list[tuple[int, ...]]:
    """All multi-indices with hyperbolic q-norm (sum alpha_i^q)^(1/q) <= p.

    Ordered by total degree, then lexicographically descending, e.g. for
    dim=2, p=2: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if p < 0:
        raise ValueError("p must be >= 0")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must lie in (0, 1], got {q}")
    kept = []
    for alpha in itertools.product(range(p + 1), repeat=dim):
        if sum(alpha) > p:
            continue
        norm = sum(a**q for a in alpha) ** (1.0 / q) if any(alpha) else 0.0
        if norm <= p + _NORM_TOL:
            kept.append(alpha)
    kept.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
    return kept


def eval_univariate(family: str, x, max_degree: int) -> np.ndarray:
    """Table of orthonormal polynomial values, shape (*x.shape, max_degree+1).

    Three-term recurrences in normalized form; stable for degrees well past
    the truncation levels used here.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree == 0:
        return out
    if family == "hermite":
        out[..., 1] = x
        for k in range(1, max_degree):
            out[..., k + 1] = (x * out[..., k] - math.sqrt(k) * out[..., k - 1]) / math.sqrt(k + 1)
    elif family == "legendre":
        # standard recurrence, then scale P_k by sqrt(2k+1)
        pkm1 = np.ones_like(x)
        pk = x
        out[..., 1] = math.sqrt(3.0) * x
        for k in range(1, max_degree):
            pkp1 = ((2 * k + 1) * x * pk - k * pkm1) / (k + 1)
            out[..., k + 1] = math.sqrt(2 * (k + 1) + 1) * pkp1
            pkm1, pk = pk, pkp1
    else:
        raise ValueError(f"unknown polynomial family {family!r}")
    return out


def gauss_nodes(family: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights for the family's probability measure.

    Weights are normalized to sum to 1 (N(0,1) measure for Hermite,
    Uniform(-1,1) for Legendre).
    """
    if not (1 <= n <= 512):
        raise ValueError(f"n must lie in [1, 512], got {n}")
    if family == "hermite":
        nodes, w = np.polynomial.hermite_e.hermegauss(n)
        return nodes, w / w.sum()
    if family == "legendre":
        nodes, w = np.polynomial.legendre.leggauss(n)
        return nodes, w / 2.0
    raise ValueError(f"unknown polynomial family {family!r}")


@dataclass(frozen=True)
class BasisSpec:
    """A truncated multivariate orthonormal basis.

    The explicit index list is part of the spec (and of serialized model
    files), so a stored model stays valid even if generation rules change.
    """

    families: tuple[str, ...]
    degree: int
    q: float
    indices: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(
            self, "indices", tuple(tuple(int(a) for a in alpha) for alpha in self.indices)
        )
        for fam in self.families:
            if fam not in POLY_FAMILIES:
                raise ValueError(f"unknown polynomial family {fam!r}")
        dim = len(self.families)
        if any(len(alpha) != dim for alpha in self.indices):
            raise ValueError("multi-index length must equal basis dimension")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("duplicate multi-indices")
        if (0,) * dim not in self.indices:
            raise ValueError("the constant (zero) multi-index is required")

    @classmethod
    def build(cls, families, p: int, q: float = 1.0) -> "BasisSpec":
        families = tuple(families)
        idx = generate_multi_indices(len(families), p, q)
        return cls(families, p, q, tuple(idx))

    @property
    def dimension(self) -> int:
        return len(self.families)

    @property
    def size(self) -> int:
        return len(self.indices)

    def max_degree_per_dim(self) -> list[int]:
        return [max(alpha[d] for alpha in self.indices) for d in range(self.dimension)]

    def evaluate(self, x_std: np.ndarray) -> np.ndarray:
        """Basis matrix at standardized points, shape (n_points, n_terms)."""
        x = np.atleast_2d(np.asarray(x_std, dtype=float))
        if x.shape[1] != self.dimension:
            raise ValueError(
                f"point dimension {x.shape[1]} does not match basis dimension {self.dimension}"
            )
        tables = [
            eval_univariate(fam, x[:, d], deg)
            for d, (fam, deg) in enumerate(zip(self.families, self.max_degree_per_dim()))
        ]
        out = np.ones((x.shape[0], self.size))
        for j, alpha in enumerate(self.indices):
            for d, a in enumerate(alpha):
                if a:
                    out[:, j] *= tables[d][:, a]
        return out

    def to_dict(self) -> dict:
        return {
            "families": list(self.families),
            "degree": self.degree,
            "q": self.q,
            "indices": [list(a) for a in self.indices],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(
            tuple(d["families"]),
            int(d["degree"]),
            float(d["q"]),
            tuple(tuple(a) for a in d["indices"]),
        )
