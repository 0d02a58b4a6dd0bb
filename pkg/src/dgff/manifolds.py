"""Built-in compact manifolds with closed-form spectral data.

Two families are supported:

* ``Torus(d)`` for d in {1, 2}: the chart is [0, 1)^d with unit periods and the
  Laplacian is scaled by 1/(4 pi^2), so the eigenvalues are |k|^2 for integer
  frequency vectors k.
* ``Sphere2()``: the round unit sphere, eigenvalues l(l + 1).

Everything is normalized against the uniform probability measure, so the
constant eigenfunction is 1 and all other eigenfunctions have unit L^2 norm.
Points are float arrays of shape (n, d) for the torus (shape (n,) is accepted
when d = 1) and unit vectors of shape (n, 3) for the sphere.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import exp1, gammaln, lpmv

# include every eigenspace with t * lambda <= HEAT_CUTOFF
HEAT_CUTOFF = 36.0
DEFAULT_MAX_LEVEL = 20_000
DEFAULT_HEAT_TOL = 1e-9


class TruncationError(ValueError):
    """A truncated eigen-series cannot meet the requested tolerance."""


# ---------------------------------------------------------------------------
# mode enumeration
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _torus_modes(d: int, radius2: int) -> tuple[tuple[int, ...], ...]:
    """All k in Z^d with |k|^2 <= radius2, sorted by (|k|^2, k)."""
    r = int(math.isqrt(radius2))
    axes = [np.arange(-r, r + 1)] * d
    ks = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    ks = ks[(ks**2).sum(axis=1) <= radius2]
    return tuple(sorted((tuple(int(c) for c in k) for k in ks), key=lambda k: (sum(c * c for c in k), k)))


def _legendre_table(x: np.ndarray, lmax: int) -> np.ndarray:
    """P_0..P_lmax evaluated at x, stacked along a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = x
    for l in range(1, lmax):
        out[l + 1] = ((2 * l + 1) * x * out[l] - l * out[l - 1]) / (l + 1)
    return out


def _legendre_series(x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """sum_l coeffs[l] * P_l(x) by the three-term recurrence, O(L) memory."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    total = coeffs[0] * p_prev
    if len(coeffs) == 1:
        return total
    p = x.copy()
    total = total + coeffs[1] * p
    for l in range(1, len(coeffs) - 1):
        p_prev, p = p, ((2 * l + 1) * x * p - l * p_prev) / (l + 1)
        total = total + coeffs[l + 1] * p
    return total


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Manifold:
    """Common interface; use :class:`Torus` or :class:`Sphere2`."""

    @property
    def kind(self) -> str:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def spectral_gap(self) -> float:
        return float(self.eigenvalues(2)[1])

    # subclasses implement these
    def modes(self, count: int) -> list[tuple[int, ...]]:
        raise NotImplementedError

    def eigenvalues(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def eigenfunctions(self, points, count: int) -> np.ndarray:
        raise NotImplementedError

    def sup_norms(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_bounds(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def count_below(self, lam: float) -> int:
        raise NotImplementedError

    def as_points(self, points) -> np.ndarray:
        raise NotImplementedError

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def distance(self, p, q) -> np.ndarray:
        raise NotImplementedError

    def pairwise_distance(self, p, q) -> np.ndarray:
        raise NotImplementedError

    # shared helpers

    def eigenpair(self, j: int):
        """j-th eigenvalue (1-based, ascending) and its eigenfunction."""
        if j < 1:
            raise ValueError(f"eigen index must be >= 1, got {j}")
        lam = float(self.eigenvalues(j)[j - 1])

        def efun(points, _j=j):
            return self.eigenfunctions(points, _j)[:, _j - 1]

        return lam, efun

    def modes_up_to(self, lam: float) -> int:
        """Number of flat indices j whose eigenvalue is <= lam."""
        return self.count_below(lam)

    def dump_eigen_csv(self, path, count: int) -> None:
        lams = self.eigenvalues(count)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "eigenvalue", "mode"])
            for j, (lam, mode) in enumerate(zip(lams, self.modes(count)), start=1):
                w.writerow([j, repr(float(lam)), " ".join(str(c) for c in mode)])

    def heat_kernel(self, t: float, p, q, truncation: int | None = None, tol: float = DEFAULT_HEAT_TOL) -> np.ndarray:
        """Truncated eigen-series of p_t(p, q), elementwise over matching point arrays."""
        level, _ = self.heat_truncation(t, truncation, tol)
        # the kernel is positive; series round-off can dip below zero where it is ~1e-16 of its peak
        return np.maximum(self._heat_from_geometry(t, self._pair_geometry(p, q), level), 0.0)

    def heat_kernel_matrix(self, t: float, points, truncation: int | None = None, tol: float = DEFAULT_HEAT_TOL) -> np.ndarray:
        """p_t(p_i, p_j) for all pairs of one point set (exactly symmetric)."""
        level, _ = self.heat_truncation(t, truncation, tol)
        pts = self.as_points(points)
        n = len(pts)
        iu, ju = np.triu_indices(n)
        vals = np.maximum(self._heat_from_geometry(t, self._pair_geometry(pts[iu], pts[ju]), level), 0.0)
        out = np.empty((n, n))
        out[iu, ju] = vals
        out[ju, iu] = vals
        return out


@dataclass(frozen=True)
class Torus(Manifold):
    """Flat torus [0, 1)^d, eigenvalues |k|^2."""

    d: int = 1

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"torus dimension must be 1 or 2, got {self.d}")

    @property
    def kind(self) -> str:
        return f"torus{self.d}"

    @property
    def dim(self) -> int:
        return self.d

    def _radius_for(self, count: int) -> int:
        r2 = 1
        while len(_torus_modes(self.d, r2)) < count:
            r2 *= 2
        return r2

    def modes(self, count: int) -> list[tuple[int, ...]]:
        return list(_torus_modes(self.d, self._radius_for(count))[:count])

    def _mode_array(self, count: int) -> np.ndarray:
        return np.array(self.modes(count), dtype=float).reshape(count, self.d)

    def eigenvalues(self, count: int) -> np.ndarray:
        return (self._mode_array(count) ** 2).sum(axis=1)

    def count_below(self, lam: float) -> int:
        return len(_torus_modes(self.d, int(math.floor(lam + 1e-9))))

    def eigenfunctions(self, points, count: int) -> np.ndarray:
        # k with first nonzero entry < 0 -> sqrt2 cos(2 pi k.x); > 0 -> sqrt2 sin(2 pi k.x)
        x = self.as_points(points)
        ks = self._mode_array(count)
        phase = 2 * np.pi * x @ ks.T
        first = np.array([next((c for c in k if c != 0), 0) for k in ks])
        out = np.where(first < 0, np.sqrt(2) * np.cos(phase), np.sqrt(2) * np.sin(phase))
        out[:, first == 0] = 1.0
        return out

    def sup_norms(self, count: int) -> np.ndarray:
        out = np.full(count, np.sqrt(2))
        out[0] = 1.0
        return out

    def lipschitz_bounds(self, count: int) -> np.ndarray:
        return np.sqrt(2) * 2 * np.pi * np.sqrt(self.eigenvalues(count))

    def as_points(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        if self.d == 1 and x.ndim <= 1:
            x = x.reshape(-1, 1)
        x = np.atleast_2d(x)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected points with {self.d} coordinates, got shape {x.shape}")
        return np.mod(x, 1.0)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        return rng.random((n, self.d))

    def _wrapped(self, p, q) -> np.ndarray:
        delta = np.abs(self.as_points(p) - self.as_points(q))
        return np.minimum(delta, 1.0 - delta)

    def distance(self, p, q) -> np.ndarray:
        return np.sqrt((self._wrapped(p, q) ** 2).sum(axis=-1))

    def pairwise_distance(self, p, q) -> np.ndarray:
        a, b = self.as_points(p), self.as_points(q)
        delta = np.abs(a[:, None, :] - b[None, :, :])
        delta = np.minimum(delta, 1.0 - delta)
        return np.sqrt((delta**2).sum(axis=-1))

    # heat kernel: product of 1-D theta series, truncated at |k_i| <= K

    def heat_truncation(self, t: float, truncation: int | None = None, tol: float = DEFAULT_HEAT_TOL):
        """(K, tail bound relative to the kernel peak) for the truncation at |k_i| <= K."""
        if not t > 0:
            raise ValueError(f"heat kernel time must be positive, got {t}")
        if truncation is None:
            truncation = int(math.floor(math.sqrt(HEAT_CUTOFF / t)))
            if truncation > DEFAULT_MAX_LEVEL:
                raise TruncationError(f"t={t} needs {truncation} frequencies, above the cap {DEFAULT_MAX_LEVEL}")
        k = np.arange(1, truncation + 1)
        peak1 = 1.0 + 2.0 * np.exp(-t * k**2).sum()
        tau = 2.0 * math.exp(-t * (truncation + 1) ** 2) / -math.expm1(-t * (2 * truncation + 3))
        tail = ((peak1 + tau) ** self.d - peak1**self.d) / peak1**self.d
        if tail > tol:
            raise TruncationError(f"truncation {truncation} leaves relative tail {tail:.3g} > {tol:g} at t={t}")
        return truncation, tail

    def _pair_geometry(self, p, q):
        return self.as_points(p) - self.as_points(q)

    def _heat_from_geometry(self, t, delta, level):
        out = np.ones(delta.shape[0])
        for axis in range(self.d):
            u = delta[:, axis]
            theta = np.ones_like(u)
            for k in range(1, level + 1):
                theta += 2.0 * math.exp(-t * k * k) * np.cos(2 * np.pi * k * u)
            out *= theta
        return out

    def green_kernel(self, p, q, truncation: int | None = None) -> np.ndarray:
        """Green's function G(p, q) = sum_{j>=2} e_j(p) e_j(q) / lambda_j.

        With ``truncation=None`` the exact value is returned (closed form for
        d = 1, Ewald splitting for d = 2).  An integer truncation K returns the
        partial eigen-series over modes with |k|^2 <= K^2.
        """
        delta = self._pair_geometry(p, q)
        delta = delta - np.round(delta)
        if self.d == 2 and np.any(np.all(np.abs(delta) < 1e-14, axis=1)):
            raise ValueError("torus(2) Green kernel is singular on the diagonal")
        if truncation is not None:
            ks = np.array(_torus_modes(self.d, truncation * truncation)[1:], dtype=float)
            lam = (ks**2).sum(axis=1)
            return (np.cos(2 * np.pi * delta @ ks.T) / lam).sum(axis=1)
        if self.d == 1:
            u = np.mod(delta[:, 0], 1.0)
            return 2 * np.pi**2 * (u * u - u + 1.0 / 6.0)
        return _ewald_green_2d(delta)


def _ewald_green_2d(delta: np.ndarray, split: float = 1 / np.pi, images: int = 3, freqs: int = 12) -> np.ndarray:
    # G = int_0^T (p_t - 1) dt + int_T^inf (p_t - 1) dt; images for the first, modes for the second
    out = np.full(delta.shape[0], -split)
    rng = np.arange(-images, images + 1)
    for n1 in rng:
        for n2 in rng:
            r2 = (delta[:, 0] - n1) ** 2 + (delta[:, 1] - n2) ** 2
            out += np.pi * exp1(np.pi**2 * r2 / split)
    ks = np.array(_torus_modes(2, freqs * freqs)[1:], dtype=float)
    lam = (ks**2).sum(axis=1)
    out += (np.exp(-split * lam) / lam * np.cos(2 * np.pi * delta @ ks.T)).sum(axis=1)
    return out


@dataclass(frozen=True)
class Sphere2(Manifold):
    """Round unit sphere S^2, eigenvalues l(l + 1), real spherical harmonics."""

    @property
    def kind(self) -> str:
        return "sphere2"

    @property
    def dim(self) -> int:
        return 2

    def modes(self, count: int) -> list[tuple[int, ...]]:
        out = []
        l = 0
        while len(out) < count:
            out.extend((l, m) for m in range(-l, l + 1))
            l += 1
        return out[:count]

    def eigenvalues(self, count: int) -> np.ndarray:
        l = np.floor(np.sqrt(np.arange(count))).astype(float)
        return l * (l + 1)

    def count_below(self, lam: float) -> int:
        lmax = int(math.floor((-1 + math.sqrt(1 + 4 * lam)) / 2 + 1e-12))
        while lmax * (lmax + 1) > lam + 1e-9:
            lmax -= 1
        return (lmax + 1) ** 2

    def eigenfunctions(self, points, count: int) -> np.ndarray:
        x = self.as_points(points)
        cos_theta = np.clip(x[:, 2], -1.0, 1.0)
        phi = np.arctan2(x[:, 1], x[:, 0])
        out = np.empty((len(x), count))
        for j, (l, m) in enumerate(self.modes(count)):
            am = abs(m)
            # lpmv carries the Condon-Shortley phase; undo it
            plm = (-1) ** am * lpmv(am, l, cos_theta)
            norm = math.sqrt((2 * l + 1) * math.exp(gammaln(l - am + 1) - gammaln(l + am + 1)))
            if m == 0:
                out[:, j] = norm * plm
            elif m > 0:
                out[:, j] = math.sqrt(2) * norm * plm * np.cos(am * phi)
            else:
                out[:, j] = math.sqrt(2) * norm * plm * np.sin(am * phi)
        return out

    def sup_norms(self, count: int) -> np.ndarray:
        # addition theorem: sum_m Y_lm(p)^2 = 2l + 1
        l = np.floor(np.sqrt(np.arange(count)))
        return np.sqrt(2 * l + 1)

    def lipschitz_bounds(self, count: int) -> np.ndarray:
        # sum_m |grad Y_lm|^2 = (2l + 1) l (l + 1)
        l = np.floor(np.sqrt(np.arange(count)))
        return np.sqrt((2 * l + 1) * l * (l + 1))

    def as_points(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[-1] != 3:
            raise ValueError(f"sphere points need 3 coordinates, got shape {x.shape}")
        norms = np.linalg.norm(x, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-8):
            raise ValueError("sphere points must be unit vectors")
        return x

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        g = rng.standard_normal((n, 3))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def distance(self, p, q) -> np.ndarray:
        a, b = self.as_points(p), self.as_points(q)
        cross = np.linalg.norm(np.cross(a, b), axis=-1)
        return np.arctan2(cross, (a * b).sum(axis=-1))

    def pairwise_distance(self, p, q) -> np.ndarray:
        a, b = self.as_points(p), self.as_points(q)
        cross = np.linalg.norm(np.cross(a[:, None, :], b[None, :, :]), axis=-1)
        return np.arctan2(cross, a @ b.T)

    def heat_truncation(self, t: float, truncation: int | None = None, tol: float = DEFAULT_HEAT_TOL):
        """(L, tail bound relative to the kernel peak) for degrees l <= L."""
        if not t > 0:
            raise ValueError(f"heat kernel time must be positive, got {t}")
        if truncation is None:
            truncation = int(math.floor((-1 + math.sqrt(1 + 4 * HEAT_CUTOFF / t)) / 2))
            if truncation > DEFAULT_MAX_LEVEL:
                raise TruncationError(f"t={t} needs degree {truncation}, above the cap {DEFAULT_MAX_LEVEL}")
        l = np.arange(truncation + 1)
        peak = float(((2 * l + 1) * np.exp(-t * l * (l + 1))).sum())
        lo = truncation + 1
        if t * (2 * lo + 1) ** 2 > 2:
            # summand decreasing from lo on: first term plus integral
            tail = (2 * lo + 1) * math.exp(-t * lo * (lo + 1)) + math.exp(-t * lo * (lo + 1)) / t
        else:
            tail = math.inf
        tail /= peak
        if tail > tol:
            raise TruncationError(f"degree {truncation} leaves relative tail {tail:.3g} > {tol:g} at t={t}")
        return truncation, tail

    def _pair_geometry(self, p, q):
        return np.clip((self.as_points(p) * self.as_points(q)).sum(axis=-1), -1.0, 1.0)

    def _heat_from_geometry(self, t, cosang, level):
        l = np.arange(level + 1)
        return _legendre_series(cosang, (2 * l + 1) * np.exp(-t * l * (l + 1)))

    def green_kernel(self, p, q, truncation: int | None = None) -> np.ndarray:
        """Green's function; exact closed form or partial series up to degree ``truncation``.

        Coincident points are rejected: the kernel has a log singularity there.
        """
        x = self._pair_geometry(p, q)
        if np.any(x >= 1.0 - 1e-14):
            raise ValueError("sphere Green kernel is singular on the diagonal")
        if truncation is not None:
            l = np.arange(truncation + 1, dtype=float)
            coeffs = np.zeros(truncation + 1)
            coeffs[1:] = (2 * l[1:] + 1) / (l[1:] * (l[1:] + 1))
            return _legendre_series(x, coeffs)
        return -1.0 - np.log((1.0 - x) / 2.0)


def make_manifold(kind: str) -> Manifold:
    kinds = {"torus1": lambda: Torus(1), "torus2": lambda: Torus(2), "sphere2": Sphere2}
    try:
        return kinds[kind]()
    except KeyError:
        raise ValueError(f"unknown manifold {kind!r}; expected one of {sorted(kinds)}") from None


# ---------------------------------------------------------------------------
# test functions in W
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Finite eigen-expansion sum_j c_j e_j with no constant mode (zero mean)."""

    __test__ = False  # keep pytest from collecting this class

    model: Manifold
    coeffs: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for j, c in self.coeffs.items():
            j = int(j)
            if j < 2:
                raise ValueError(f"test functions must have zero mean: mode j={j} is not allowed")
            clean[j] = float(c)
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def parse(cls, model: Manifold, text: str) -> TestFunction:
        """Parse ``"2:1.0, 4:0.5"`` into a test function."""
        coeffs = {}
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            j, _, c = item.partition(":")
            if not _:
                raise ValueError(f"bad mode spec {item!r}, expected 'j:coefficient'")
            coeffs[int(j)] = coeffs.get(int(j), 0.0) + float(c)
        return cls(model, coeffs)

    def format(self) -> str:
        return ", ".join(f"{j}:{c!r}" for j, c in self.coeffs.items())

    @property
    def max_mode(self) -> int:
        return max(self.coeffs, default=1)

    def _arrays(self):
        idx = np.array(list(self.coeffs), dtype=int)
        c = np.array(list(self.coeffs.values()))
        return idx, c

    def __call__(self, points) -> np.ndarray:
        pts = self.model.as_points(points)
        if not self.coeffs:
            return np.zeros(len(pts))
        idx, c = self._arrays()
        return self.model.eigenfunctions(pts, self.max_mode)[:, idx - 1] @ c

    def __add__(self, other: TestFunction) -> TestFunction:
        merged = dict(self.coeffs)
        for j, c in other.coeffs.items():
            merged[j] = merged.get(j, 0.0) + c
        return TestFunction(self.model, merged)

    def scaled(self, a: float) -> TestFunction:
        return TestFunction(self.model, {j: a * c for j, c in self.coeffs.items()})

    @property
    def l2_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.coeffs.values()))

    @property
    def sup_bound(self) -> float:
        if not self.coeffs:
            return 0.0
        idx, c = self._arrays()
        return float(np.abs(c) @ self.model.sup_norms(self.max_mode)[idx - 1])

    @property
    def lipschitz_bound(self) -> float:
        if not self.coeffs:
            return 0.0
        idx, c = self._arrays()
        return float(np.abs(c) @ self.model.lipschitz_bounds(self.max_mode)[idx - 1])

    def green_form(self) -> float:
        """(f, G f) = sum_j c_j^2 / lambda_j, exact."""
        if not self.coeffs:
            return 0.0
        idx, c = self._arrays()
        lam = self.model.eigenvalues(self.max_mode)[idx - 1]
        return float((c * c / lam).sum())

    def semigroup_form(self, t: float) -> float:
        """(f, S_t f) = sum_j exp(-t lambda_j) c_j^2, exact."""
        if t < 0:
            raise ValueError("semigroup time must be nonnegative")
        if not self.coeffs:
            return 0.0
        idx, c = self._arrays()
        lam = self.model.eigenvalues(self.max_mode)[idx - 1]
        return float((np.exp(-t * lam) * c * c).sum())
