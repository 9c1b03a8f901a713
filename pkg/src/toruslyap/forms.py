"""Differential forms on the flat torus and the induced action on cohomology.

A k-form is stored by its coefficient functions over the basis dx_I (I an
increasing multi-index, lexicographic order). On a flat torus the harmonic
forms are exactly the constant-coefficient forms, so harmonic projection is
coefficient averaging and H^k(f) is the compound matrix of A^T.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cocycle import exterior_log_norms
from .errors import ConsistencyError, NumericError, ValidationError
from .linalg import compound, multi_indices, spectral_radius

__all__ = [
    "TrigPoly",
    "KForm",
    "EigenData",
    "CohomologyAction",
    "ProjectionResult",
    "GrowthEstimate",
    "AlphaSequence",
    "pullback_at",
    "pullback_sampler",
    "pullback_grid_size",
    "harmonic_projection",
    "cohomology_action",
    "total_spectral_radius",
    "alpha_sequence",
    "volume_growth",
    "entropy_estimate",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TrigPoly:
    """c0 + sum_m (a_m cos(2 pi m.x) + b_m sin(2 pi m.x))."""

    const: complex = 0.0
    modes: tuple = ()  # ((m, a, b), ...)

    def __call__(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        dtype = complex if self.is_complex else float
        out = np.full(xs.shape[0], self.const, dtype=dtype)
        for m, a, b in self.modes:
            arg = TWO_PI * (xs @ np.asarray(m, dtype=float))
            out = out + a * np.cos(arg) + b * np.sin(arg)
        return out

    @property
    def is_complex(self):
        vals = [self.const] + [v for _, a, b in self.modes for v in (a, b)]
        return any(isinstance(v, complex) and v.imag != 0 for v in vals)

    @property
    def max_frequency(self):
        return max((max(abs(int(v)) for v in m) for m, _, _ in self.modes), default=0)


def _num_to_json(v):
    if isinstance(v, complex):
        return [v.real, v.imag] if v.imag else v.real
    return float(v)


def _num_from_json(v):
    if isinstance(v, list):
        if len(v) != 2:
            raise ValidationError("complex numbers are encoded as [re, im]")
        return complex(float(v[0]), float(v[1]))
    return float(v)


@dataclass(frozen=True)
class KForm:
    """A k-form on T^n: ``terms`` maps increasing index tuples to TrigPoly."""

    dim: int
    degree: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = set(multi_indices(self.dim, self.degree))
        terms = {}
        for idx, poly in self.terms.items():
            idx = tuple(int(i) for i in idx)
            if idx not in allowed:
                raise ValidationError(f"index {idx} is not an increasing {self.degree}-tuple below {self.dim}")
            if not isinstance(poly, TrigPoly):
                poly = TrigPoly(poly)
            terms[idx] = poly
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant(cls, dim, degree, coeffs):
        """Constant form from a coefficient vector over the dx_I basis."""
        idx = multi_indices(dim, degree)
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (len(idx),):
            raise ValidationError(f"expected {len(idx)} coefficients")
        return cls(dim, degree, {I: TrigPoly(complex(c) if np.iscomplexobj(coeffs) else float(c))
                                 for I, c in zip(idx, coeffs) if c != 0})

    @classmethod
    def basis(cls, dim, I):
        """dx_I."""
        return cls(dim, len(I), {tuple(I): TrigPoly(1.0)})

    @property
    def is_complex(self):
        return any(p.is_complex or isinstance(p.const, complex) and p.const.imag != 0
                   for p in self.terms.values())

    @property
    def is_constant(self):
        return all(not p.modes for p in self.terms.values())

    @property
    def max_frequency(self):
        return max((p.max_frequency for p in self.terms.values()), default=0)

    def coefficients(self, xs):
        """Coefficient vectors at points: shape (N, C(n,k)) (or (C,) for one point)."""
        xs = np.asarray(xs, dtype=float)
        single = xs.ndim == 1
        xs = np.atleast_2d(xs)
        idx = multi_indices(self.dim, self.degree)
        dtype = complex if self.is_complex else float
        out = np.zeros((xs.shape[0], len(idx)), dtype=dtype)
        for j, I in enumerate(idx):
            if I in self.terms:
                out[:, j] = self.terms[I](xs)
        return out[0] if single else out

    def harmonic_part(self):
        idx = multi_indices(self.dim, self.degree)
        dtype = complex if self.is_complex else float
        return np.array([self.terms[I].const if I in self.terms else 0.0 for I in idx], dtype=dtype)

    def to_json(self):
        return {
            "degree": self.degree,
            "dim": self.dim,
            "terms": [
                {
                    "index": list(I),
                    "const": _num_to_json(p.const),
                    "modes": [
                        {"m": [int(v) for v in m], "cos": _num_to_json(a), "sin": _num_to_json(b)}
                        for m, a, b in p.modes
                    ],
                }
                for I, p in self.terms.items()
            ],
        }

    @classmethod
    def from_json(cls, data, dim=None):
        try:
            degree = int(data["degree"])
            dim = int(data.get("dim", dim))
            terms = {}
            for term in data["terms"]:
                modes = tuple(
                    (tuple(int(v) for v in md["m"]), _num_from_json(md.get("cos", 0.0)),
                     _num_from_json(md.get("sin", 0.0)))
                    for md in term.get("modes", [])
                )
                terms[tuple(term["index"])] = TrigPoly(_num_from_json(term.get("const", 0.0)), modes)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed form JSON: {exc}") from None
        return cls(dim, degree, terms)


# -- pullback and projection -------------------------------------------------


def pullback_at(sys, form, x):
    """Coefficients of (f^* form)_x: compound(D_x f, k)^T applied to form(f(x)).

    ``x`` may be one point or an array of points.
    """
    if form.dim != sys.dim:
        raise ValidationError("form and system dimensions differ")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = sys.check_points(np.atleast_2d(x))
    ys, Js = _kernels.points_jacobians(xs, False, *sys.packed)
    C = compound(Js, form.degree)
    w = form.coefficients(ys)
    out = np.einsum("nji,nj->ni", C, w)
    return out[0] if single else out


def pullback_sampler(sys, form):
    return lambda xs: pullback_at(sys, form, np.atleast_2d(xs))


def pullback_grid_size(sys, k):
    """Grid points per axis that integrate the pullback of a constant k-form exactly.

    The Jacobian is a trigonometric polynomial only when no shear argument
    depends on a coordinate moved by an earlier shear; otherwise ``None``.
    """
    moved = set()
    bound = 0
    A = np.array(sys.matrix)
    for s in sys.shears:
        if any(s.frequency[a] != 0 for a in moved):
            return None
        moved.add(s.axis)
        bound += int(np.max(np.abs(A.T @ np.array(s.frequency))))
    return 2 * k * bound + 1


@dataclass(frozen=True)
class ProjectionResult:
    """Harmonic (constant) part of a form, with Monte Carlo standard errors."""

    coefficients: np.ndarray
    stderr: np.ndarray
    method: str
    n_points: int

    def as_form(self, dim, degree):
        return KForm.constant(dim, degree, self.coefficients)


def _grid(dim, size):
    axes = [np.arange(size) / size] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def harmonic_projection(sampler, dim, grid=None, n_samples=None, seed=0, chunk=65536):
    """Average a coefficient field over T^n.

    With ``grid`` the average is the tensor-product rectangle rule on
    ``grid**dim`` points, exact for trig polynomials of degree < grid/2 per
    axis. Otherwise ``n_samples`` uniform points give a Monte Carlo mean.
    """
    if (grid is None) == (n_samples is None):
        raise ValidationError("give exactly one of grid or n_samples")
    if grid is not None:
        if grid < 1:
            raise ValidationError("grid must be >= 1")
        pts = _grid(dim, int(grid))
        total = None
        for s in range(0, len(pts), chunk):
            part = np.asarray(sampler(pts[s:s + chunk])).sum(axis=0)
            total = part if total is None else total + part
        coeffs = total / len(pts)
        return ProjectionResult(coeffs, np.zeros(coeffs.shape), "grid", len(pts))
    if n_samples < 100:
        raise ValidationError("n_samples must be >= 100")
    pts = np.random.default_rng(seed).random((int(n_samples), dim))
    vals = np.asarray(sampler(pts))
    return ProjectionResult(
        vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(len(pts)), "monte-carlo", len(pts)
    )


# -- cohomology --------------------------------------------------------------


@dataclass(frozen=True)
class EigenData:
    """An eigenpair of H^k(f): eigenvalue e^exponent, constant eigenform ``vector``."""

    degree: int
    exponent: complex
    vector: np.ndarray
    residual: float

    @property
    def eigenvalue(self):
        return cmath.exp(self.exponent)

    @property
    def re(self):
        return self.exponent.real

    def as_form(self, dim):
        return KForm.constant(dim, self.degree, self.vector)


@dataclass(frozen=True)
class CohomologyAction:
    degree: int
    matrix: np.ndarray
    eigen: tuple

    @property
    def spectral_radius(self):
        return spectral_radius(self.matrix)


def cohomology_action(sys, k):
    """Integer matrix compound(A^T, k) of H^k(f) and its eigen-decomposition.

    Exponents use the principal branch of the logarithm; only real parts
    enter any bound.
    """
    n = sys.dim
    multi_indices(n, k)
    AT = np.array(sys.matrix, dtype=np.int64).T
    M = np.rint(compound(AT.astype(float), k)).astype(np.int64)
    w, V = np.linalg.eig(M.astype(float))
    eigen = []
    for j in np.argsort(-np.abs(w), kind="stable"):
        v = V[:, j].astype(complex)
        v = v / np.linalg.norm(v)
        lam = complex(w[j])
        if lam == 0:
            raise NumericError("zero eigenvalue in a unimodular compound matrix")
        res = float(np.linalg.norm(M @ v - lam * v))
        if res > 1e-9 * max(1.0, abs(lam)):
            raise NumericError(f"eigenvector residual {res:.3g} too large")
        eigen.append(EigenData(k, cmath.log(lam), v, res))
    return CohomologyAction(k, M, tuple(eigen))


def total_spectral_radius(sys):
    """(sp, degree): max over k of the spectral radius of H^k(f); ties go to smallest k."""
    best, arg = -1.0, 0
    for k in range(sys.dim + 1):
        r = spectral_radius(compound(np.array(sys.matrix, dtype=float).T, k))
        if r > best * (1 + 1e-12) + 1e-15:
            best, arg = r, k
    return best, arg


# -- eigen-equation correction terms ----------------------------------------


@dataclass(frozen=True)
class AlphaSequence:
    """alpha_1..alpha_n at one point, evaluated two independent ways."""

    by_recursion: np.ndarray  # (n, C)
    direct: np.ndarray  # (n, C)
    discrepancy: np.ndarray  # (n,)
    scale: np.ndarray  # (n,) size of the cancelling terms (f^j)^* w and e^{j lam} w, at least 1

    @property
    def max_relative_discrepancy(self):
        return float(np.max(self.discrepancy / self.scale))


def alpha_sequence(sys, eigendata, x, n, check_tol=1e-8):
    """The correction terms alpha_j with (f^j)^* w = e^{j lam} w + alpha_j, j = 1..n.

    (a) accumulates e^{(j-1)lam} sum_{i<j} e^{-i lam} (f^i)^* alpha with
        alpha = f^* w - e^{lam} w; (b) evaluates (f^j)^* w - e^{j lam} w
    directly from the cocycle. The two agree identically, so a gap beyond
    ``check_tol`` relative to the size of the cancelling terms
    max(||(f^j)^* w||, |e^{j lam}| ||w||, 1) is reported as a bug.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    k = eigendata.degree
    w = np.asarray(eigendata.vector, dtype=complex)
    lam = eigendata.exponent
    x = np.ascontiguousarray(sys.check_point(x))
    pts, Js = _kernels.orbit(x, int(n), False, *sys.packed)
    Cs = compound(Js, k)  # compound of D f at x_0..x_{n-1}
    e_lam = cmath.exp(lam)

    def alpha_at(t):
        return Cs[t].T @ w - e_lam * w

    C = len(w)
    rec = np.zeros((n, C), dtype=complex)
    direct = np.zeros((n, C), dtype=complex)
    scale = np.ones(n)
    # P_j = compound(Phi(j, x), k); (f^j)^* beta at x = P_j^T beta(x_j)
    P = np.eye(C)
    acc = np.zeros(C, dtype=complex)  # sum_{i<j} e^{-i lam} (f^i)^* alpha
    for j in range(1, n + 1):
        i = j - 1
        acc = acc + cmath.exp(-i * lam) * (P.T @ alpha_at(i))
        rec[j - 1] = cmath.exp((j - 1) * lam) * acc
        P = Cs[j - 1] @ P
        pulled = P.T @ w
        direct[j - 1] = pulled - cmath.exp(j * lam) * w
        # both sides lose about eps * (this) to cancellation
        scale[j - 1] = max(1.0, np.linalg.norm(pulled), abs(cmath.exp(j * lam)) * np.linalg.norm(w))
    disc = np.linalg.norm(rec - direct, axis=1)
    seq = AlphaSequence(rec, direct, disc, scale)
    if seq.max_relative_discrepancy > check_tol:
        raise ConsistencyError(
            f"alpha recursion and direct evaluation differ by {seq.max_relative_discrepancy:.3g}"
        )
    return seq


# -- volume growth -----------------------------------------------------------


@dataclass(frozen=True)
class GrowthEstimate:
    """(1/n) log of a Monte Carlo mean of exp(log_norms)."""

    value: float
    stderr: float
    n: int
    n_samples: int
    log_norms: np.ndarray = field(repr=False)

    def __float__(self):
        return self.value


def _log_mean_exp(logs, n):
    m = float(np.max(logs))
    w = np.exp(logs - m)
    mean = float(np.mean(w))
    value = (m + math.log(mean)) / n
    # delta method: se(log mean) = se(mean) / mean
    se = float(np.std(w, ddof=1) / math.sqrt(len(w))) / mean / n if len(w) > 1 else 0.0
    return value, se


def volume_growth(sys, k, n, n_samples, seed=0):
    """(1/n) log of the volume average of ||compound(D_x f^n, k)||."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    xs = np.random.default_rng(seed).random((int(n_samples), sys.dim))
    logs = exterior_log_norms(sys, k, xs, n)
    if not np.all(np.isfinite(logs)):
        raise NumericError("non-finite exterior norm in volume growth")
    value, se = _log_mean_exp(logs, n)
    return GrowthEstimate(value, se, int(n), int(n_samples), logs)


def entropy_estimate(sys, n, n_samples, seed=0):
    """Volume growth of the full exterior algebra: per sample, the max over k of the degree-k norm."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    xs = np.random.default_rng(seed).random((int(n_samples), sys.dim))
    per_k = np.stack([exterior_log_norms(sys, k, xs, n) for k in range(sys.dim + 1)])
    logs = per_k.max(axis=0)
    value, se = _log_mean_exp(logs, n)
    return GrowthEstimate(value, se, int(n), int(n_samples), logs)
