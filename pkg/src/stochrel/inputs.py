"""Input randomness: marginal distributions, random vectors and sampling.

Supports the four marginal families the case studies need (lognormal,
Gaussian, uniform, truncated Rayleigh), moment parameter conversions,
isoprobabilistic transforms to standardized spaces, and Monte Carlo /
Latin hypercube sampling of independent random vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .rng import make_rng

__all__ = [
    "MarginalSpec",
    "RandomVector",
    "lognormal_from_moments",
    "lognormal_to_moments",
    "gaussian_cdf",
    "gaussian_quantile",
]

FAMILIES = ("lognormal", "gaussian", "uniform", "truncated_rayleigh")

# Standard polynomial family matched to each marginal after the
# isoprobabilistic transform.
_STANDARD_FAMILY = {
    "lognormal": "hermite",
    "gaussian": "hermite",
    "uniform": "legendre",
    "truncated_rayleigh": "legendre",
}


def gaussian_cdf(x):
    """Standard normal CDF (rational approximation, abs error < 1e-14)."""
    return special.ndtr(x)


def gaussian_quantile(u):
    """Standard normal quantile (inverse of :func:`gaussian_cdf`)."""
    return special.ndtri(u)


def lognormal_from_moments(mean: float, std: float) -> tuple[float, float]:
    """Convert (mean, std) of a lognormal variable to (log-mean, log-std).

    A zero std yields the degenerate point mass at ``mean``.
    """
    if mean <= 0.0:
        raise ValueError(f"lognormal mean must be positive, got {mean}")
    if std < 0.0:
        raise ValueError(f"std must be non-negative, got {std}")
    zeta2 = math.log1p((std / mean) ** 2)
    zeta = math.sqrt(zeta2)
    lam = math.log(mean) - 0.5 * zeta2
    return lam, zeta


def lognormal_to_moments(lam: float, zeta: float) -> tuple[float, float]:
    """Inverse of :func:`lognormal_from_moments`."""
    mean = math.exp(lam + 0.5 * zeta**2)
    std = mean * math.sqrt(math.expm1(zeta**2))
    return mean, std


def _rayleigh_scale(mean: float) -> float:
    # Rayleigh mean = scale * sqrt(pi/2)
    return mean * math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class MarginalSpec:
    """One marginal distribution: family name plus family-specific parameters.

    Parameters by family:
      lognormal           (log_mean, log_std), log_std >= 0 (0 = point mass)
      gaussian            (mean, std), std >= 0 (0 = point mass)
      uniform             (lower, upper), lower < upper
      truncated_rayleigh  (untruncated_mean, lower, upper), 0 <= lower < upper
    """

    family: str
    params: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        if self.family in ("lognormal", "gaussian"):
            if len(p) != 2:
                raise ValueError(f"{self.family} takes 2 parameters, got {len(p)}")
            if p[1] < 0.0:
                raise ValueError(f"{self.family} scale must be >= 0, got {p[1]}")
        elif self.family == "uniform":
            if len(p) != 2:
                raise ValueError(f"uniform takes 2 parameters, got {len(p)}")
            if not p[0] < p[1]:
                raise ValueError(f"uniform requires lower < upper, got {p}")
        elif self.family == "truncated_rayleigh":
            if len(p) != 3:
                raise ValueError(f"truncated_rayleigh takes 3 parameters, got {len(p)}")
            if p[0] <= 0.0:
                raise ValueError(f"rayleigh mean must be positive, got {p[0]}")
            if not (0.0 <= p[1] < p[2]):
                raise ValueError(f"truncation requires 0 <= lower < upper, got cuts {p[1:]}")

    # --- constructors -----------------------------------------------------

    @classmethod
    def lognormal(cls, log_mean, log_std, name=""):
        return cls("lognormal", (log_mean, log_std), name)

    @classmethod
    def lognormal_from_mean_std(cls, mean, std, name=""):
        return cls("lognormal", lognormal_from_moments(mean, std), name)

    @classmethod
    def gaussian(cls, mean, std, name=""):
        return cls("gaussian", (mean, std), name)

    @classmethod
    def uniform(cls, lower, upper, name=""):
        return cls("uniform", (lower, upper), name)

    @classmethod
    def truncated_rayleigh(cls, mean, lower, upper, name=""):
        return cls("truncated_rayleigh", (mean, lower, upper), name)

    # --- properties -------------------------------------------------------

    @property
    def degenerate(self) -> bool:
        """True when the marginal is a point mass (zero scale)."""
        return self.family in ("lognormal", "gaussian") and self.params[1] == 0.0

    @property
    def standard_family(self) -> str:
        """Polynomial family ('hermite' or 'legendre') for the standardized variable."""
        return _STANDARD_FAMILY[self.family]

    @property
    def support(self) -> tuple[float, float]:
        f, p = self.family, self.params
        if f == "lognormal":
            if self.degenerate:
                v = math.exp(p[0])
                return v, v
            return 0.0, math.inf
        if f == "gaussian":
            if self.degenerate:
                return p[0], p[0]
            return -math.inf, math.inf
        if f == "uniform":
            return p[0], p[1]
        return p[1], p[2]

    # --- distribution kernels ---------------------------------------------

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        if f == "lognormal":
            if self.degenerate:
                return (x >= math.exp(p[0])).astype(float)
            out = np.zeros_like(x)
            pos = x > 0
            out[pos] = special.ndtr((np.log(x[pos]) - p[0]) / p[1])
            return out if out.ndim else float(out)
        if f == "gaussian":
            if self.degenerate:
                return (x >= p[0]).astype(float)
            return special.ndtr((x - p[0]) / p[1])
        if f == "uniform":
            return np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        # truncated Rayleigh: renormalized restriction of the full CDF
        sig = _rayleigh_scale(p[0])
        flo = -np.expm1(-p[1] ** 2 / (2 * sig**2))
        fhi = -np.expm1(-p[2] ** 2 / (2 * sig**2))
        full = -np.expm1(-np.square(np.clip(x, p[1], p[2])) / (2 * sig**2))
        return (full - flo) / (fhi - flo)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0.0) | (u >= 1.0)):
            raise ValueError("quantile defined on the open interval (0, 1)")
        f, p = self.family, self.params
        if f == "lognormal":
            if self.degenerate:
                return np.full_like(u, math.exp(p[0]))
            return np.exp(p[0] + p[1] * special.ndtri(u))
        if f == "gaussian":
            if self.degenerate:
                return np.full_like(u, p[0])
            return p[0] + p[1] * special.ndtri(u)
        if f == "uniform":
            return p[0] + u * (p[1] - p[0])
        sig = _rayleigh_scale(p[0])
        flo = -math.expm1(-p[1] ** 2 / (2 * sig**2))
        fhi = -math.expm1(-p[2] ** 2 / (2 * sig**2))
        return sig * np.sqrt(-2.0 * np.log1p(-(flo + u * (fhi - flo))))

    def pdf(self, x):
        if self.degenerate:
            raise ValueError("pdf undefined for a degenerate (point mass) marginal")
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        if f == "lognormal":
            out = np.zeros_like(x)
            pos = x > 0
            z = (np.log(x[pos]) - p[0]) / p[1]
            out[pos] = np.exp(-0.5 * z**2) / (x[pos] * p[1] * math.sqrt(2 * math.pi))
            return out if out.ndim else float(out)
        if f == "gaussian":
            z = (x - p[0]) / p[1]
            return np.exp(-0.5 * z**2) / (p[1] * math.sqrt(2 * math.pi))
        if f == "uniform":
            inside = (x >= p[0]) & (x <= p[1])
            return np.where(inside, 1.0 / (p[1] - p[0]), 0.0)
        sig = _rayleigh_scale(p[0])
        flo = -math.expm1(-p[1] ** 2 / (2 * sig**2))
        fhi = -math.expm1(-p[2] ** 2 / (2 * sig**2))
        inside = (x >= p[1]) & (x <= p[2])
        dens = (x / sig**2) * np.exp(-np.square(x) / (2 * sig**2)) / (fhi - flo)
        return np.where(inside, dens, 0.0)

    def to_standard(self, x):
        """Map x to the standardized space of :attr:`standard_family`.

        Hermite marginals map to N(0,1) (exactly, via log for lognormal);
        Legendre marginals map through the CDF to Uniform(-1, 1).
        """
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        if f == "lognormal":
            if self.degenerate:
                return np.zeros_like(x)
            return (np.log(x) - p[0]) / p[1]
        if f == "gaussian":
            if self.degenerate:
                return np.zeros_like(x)
            return (x - p[0]) / p[1]
        u = self.cdf(x)
        return 2.0 * u - 1.0

    def from_standard(self, xi):
        """Inverse of :meth:`to_standard`."""
        xi = np.asarray(xi, dtype=float)
        f, p = self.family, self.params
        if f == "lognormal":
            if self.degenerate:
                return np.full_like(xi, math.exp(p[0]))
            return np.exp(p[0] + p[1] * xi)
        if f == "gaussian":
            if self.degenerate:
                return np.full_like(xi, p[0])
            return p[0] + p[1] * xi
        u = np.clip(0.5 * (xi + 1.0), 1e-15, 1.0 - 1e-15)
        return self.quantile(u)

    # --- serialization ----------------------------------------------------

    _PARAM_NAMES = {
        "lognormal": ("log_mean", "log_std"),
        "gaussian": ("mean", "std"),
        "uniform": ("lower", "upper"),
        "truncated_rayleigh": ("mean", "lower", "upper"),
    }

    def to_dict(self) -> dict:
        names = self._PARAM_NAMES[self.family]
        d = {"family": self.family, "params": dict(zip(names, self.params))}
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalSpec":
        family = d["family"]
        if family not in cls._PARAM_NAMES:
            raise ValueError(f"unknown family {family!r}")
        names = cls._PARAM_NAMES[family]
        raw = d["params"]
        missing = [k for k in names if k not in raw]
        if missing:
            raise ValueError(f"{family} is missing parameters {missing}")
        extra = [k for k in raw if k not in names]
        if extra:
            raise ValueError(f"{family} got unknown parameters {extra}")
        return cls(family, tuple(raw[k] for k in names), d.get("name", ""))


@dataclass(frozen=True)
class RandomVector:
    """Independent random vector defined by its ordered marginals."""

    marginals: tuple[MarginalSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) < 1:
            raise ValueError("a random vector needs at least one marginal")

    @property
    def dimension(self) -> int:
        return len(self.marginals)

    @property
    def standard_families(self) -> tuple[str, ...]:
        return tuple(m.standard_family for m in self.marginals)

    def mc_sample(self, n: int, seed: int) -> np.ndarray:
        """n x M matrix of i.i.d. draws; deterministic given seed."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = make_rng(seed)
        u = rng.uniform(1e-15, 1.0 - 1e-15, size=(n, self.dimension))
        return self._from_uniform(u)

    def lhs_sample(self, n: int, seed: int) -> np.ndarray:
        """Latin hypercube sample: per column one point in each of the n
        probability strata ((k-1)/n, k/n), strata permuted independently."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = make_rng(seed)
        u = np.empty((n, self.dimension))
        for j in range(self.dimension):
            perm = rng.permutation(n)
            jitter = rng.uniform(1e-12, 1.0 - 1e-12, size=n)
            u[:, j] = (perm + jitter) / n
        return self._from_uniform(u)

    def _from_uniform(self, u: np.ndarray) -> np.ndarray:
        x = np.empty_like(u)
        for j, m in enumerate(self.marginals):
            x[:, j] = m.quantile(u[:, j])
        return x

    def to_standard(self, x: np.ndarray) -> np.ndarray:
        """Row-wise isoprobabilistic transform to the standardized space."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dimension:
            raise ValueError(f"expected {self.dimension} columns, got {x.shape[1]}")
        out = np.empty_like(x)
        for j, m in enumerate(self.marginals):
            out[:, j] = m.to_standard(x[:, j])
        return out

    def from_standard(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out = np.empty_like(xi)
        for j, m in enumerate(self.marginals):
            out[:, j] = m.from_standard(xi[:, j])
        return out

    def to_dict(self) -> dict:
        return {"marginals": [m.to_dict() for m in self.marginals]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomVector":
        return cls(tuple(MarginalSpec.from_dict(m) for m in d["marginals"]))
