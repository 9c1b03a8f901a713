"""Derivative cocycles, Lyapunov spectra and Oseledec splittings.

The derivative cocycle of f is Phi(n, x) = D_x f^n, with backward Jacobians
for n < 0. Exponents come from the discrete QR method; top exponents of the
exterior powers come from renormalised compound products; Oseledec blocks
come from intersecting the fast flag (frames pushed forward from the past)
with the slow flag (frames pulled back from the future).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from . import _kernels
from .errors import (
    DegenerateSplittingError,
    NumericError,
    ReorthonormalizationError,
    ValidationError,
)
from .linalg import combo_array
from .systems import _direction

__all__ = [
    "LyapunovSpectrum",
    "UniformExponent",
    "OseledecFrame",
    "OrbitFrames",
    "cocycle_product",
    "qr_spectrum",
    "exterior_top_exponent",
    "exterior_log_norms",
    "uniform_exponent",
    "ensemble_points",
    "cluster_exponents",
    "orbit_frames",
    "oseledec_frame",
    "principal_angle",
]

MAX_COCYCLE_STEPS = 10**7
DEFAULT_TRANSIENT = 1000
GAP_FLOOR = 1e-2


@dataclass(frozen=True)
class LyapunovSpectrum:
    """QR estimate of the Lyapunov spectrum along one orbit.

    ``history`` holds running means at ``history_steps`` in QR column order
    (which is the sorted order once the frame has aligned).
    """

    exponents: np.ndarray
    n_steps: int
    n_transient: int
    history: np.ndarray
    history_steps: np.ndarray
    half_width: np.ndarray
    log_det_mean: float
    x0: np.ndarray
    x_final: np.ndarray

    @property
    def dim(self):
        return len(self.exponents)

    @property
    def sum(self):
        return float(np.sum(self.exponents))

    @property
    def sigma_plus(self):
        return float(np.sum(self.exponents[self.exponents > 0]))

    def top_sum(self, k):
        """Lambda_k: sum of the k largest exponents."""
        return float(np.sum(self.exponents[:k]))

    @property
    def max_half_width(self):
        return float(np.max(self.half_width)) if len(self.half_width) else 0.0


def _orbit_arrays(sys, x, n, backward):
    x = np.ascontiguousarray(sys.check_point(x))
    return _kernels.orbit(x, int(n), backward, *sys.packed)


def cocycle_product(sys, x, n):
    """D_x f^n by the chain rule (backward Jacobians for n < 0), no rescaling."""
    n = int(n)
    if abs(n) > MAX_COCYCLE_STEPS:
        raise ValidationError(f"|n| must be <= {MAX_COCYCLE_STEPS}")
    d = sys.dim
    if n == 0:
        sys.check_point(x)
        return np.eye(d)
    _, Js = _orbit_arrays(sys, x, abs(n), n < 0)
    P = np.eye(d)
    for t in range(abs(n)):
        with np.errstate(over="ignore", invalid="ignore"):
            P = Js[t] @ P
        if not np.all(np.isfinite(P)):
            raise NumericError("cocycle product overflowed", step=t)
    return P


def _last_decade_half_width(history, steps, n_steps):
    if len(history) == 0:
        return np.zeros(history.shape[1])
    tail = history[steps >= 0.9 * n_steps]
    if len(tail) == 0:
        tail = history[-1:]
    return 0.5 * (tail.max(axis=0) - tail.min(axis=0))


def qr_spectrum(sys, x0, n_steps, n_transient=DEFAULT_TRANSIENT, direction="forward", n_records=1000):
    """Lyapunov spectrum by QR re-orthonormalisation along the orbit of ``x0``.

    The first ``n_transient`` iterates align the frame but are not averaged.
    Exponents are in nats per iterate, sorted descending.
    """
    if n_steps < 1000:
        raise ValidationError("n_steps must be >= 1000")
    if n_transient < 0:
        raise ValidationError("n_transient must be >= 0")
    backward = _direction(direction)
    x0 = np.ascontiguousarray(sys.check_point(x0))
    sums, hist, rec_steps, x_end, bad = _kernels.qr_run(
        x0, int(n_transient), int(n_steps), int(n_records), backward, *sys.packed
    )
    if bad >= 0:
        raise ReorthonormalizationError("QR step produced a non-positive diagonal entry", step=int(bad))
    raw = sums / n_steps
    order = np.argsort(-raw, kind="stable")
    hw = _last_decade_half_width(hist, rec_steps, n_steps)
    log_det = math.log(abs(sys.det))
    return LyapunovSpectrum(
        exponents=raw[order],
        n_steps=int(n_steps),
        n_transient=int(n_transient),
        history=hist,
        history_steps=rec_steps,
        half_width=hw[order],
        log_det_mean=-log_det if backward else log_det,
        x0=x0,
        x_final=np.array(x_end),
    )


def exterior_top_exponent(sys, k, x0, n_steps, n_transient=0):
    """(1/n) log ||compound(Phi(n, x0), k)||, an estimate of Lambda_k."""
    if not 1 <= k <= sys.dim:
        raise ValidationError(f"k must lie in [1, {sys.dim}], got {k}")
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    x0 = np.ascontiguousarray(sys.check_point(x0))
    val, bad = _kernels.log_compound_norm(
        x0, int(n_transient), int(n_steps), combo_array(sys.dim, k), False, *sys.packed
    )
    if bad >= 0 or not math.isfinite(val):
        raise NumericError("exterior product overflowed despite renormalisation", step=int(bad))
    return val / n_steps


def exterior_log_norms(sys, k, xs, n_steps, direction="forward"):
    """log ||compound(Phi(n_steps, x), k)|| for each row x of ``xs``."""
    if not 0 <= k <= sys.dim:
        raise ValidationError(f"k must lie in [0, {sys.dim}], got {k}")
    xs = sys.check_points(xs)
    vals, bad = _kernels.batch_log_compound_norms(
        xs, int(n_steps), combo_array(sys.dim, k), _direction(direction), *sys.packed
    )
    if np.any(bad >= 0):
        i = int(np.argmax(bad >= 0))
        raise NumericError(f"exterior product overflowed for sample {i}", step=int(bad[i]))
    return vals


def ensemble_points(dim, size, seed):
    """One uniform point per orbit, each from its own stream keyed by (seed, index)."""
    return np.array(
        [np.random.default_rng([int(seed), i]).random(dim) for i in range(int(size))]
    ).reshape(int(size), dim)


@dataclass(frozen=True)
class UniformExponent:
    """Ensemble-sup estimate of lambda^+(Df^{wedge k}) with its spread."""

    k: int
    value: float
    per_orbit: np.ndarray
    n_steps: int
    seed: int

    @property
    def spread(self):
        return float(np.max(self.per_orbit) - np.min(self.per_orbit))

    @property
    def stderr(self):
        m = len(self.per_orbit)
        return float(np.std(self.per_orbit, ddof=1) / math.sqrt(m)) if m > 1 else 0.0

    def __float__(self):
        return self.value


def uniform_exponent(sys, k, ensemble_size, n_steps, seed=0):
    """Max over seeded uniform initial points of the finite-time exponent of Df^{wedge k}.

    A finite ensemble only samples the supremum from below; the per-orbit
    values are kept so the spread can be reported.
    """
    if ensemble_size < 1:
        raise ValidationError("ensemble_size must be >= 1")
    if not 0 <= k <= sys.dim:
        raise ValidationError(f"k must lie in [0, {sys.dim}], got {k}")
    xs = ensemble_points(sys.dim, ensemble_size, seed)
    per_orbit = exterior_log_norms(sys, k, xs, n_steps) / n_steps
    return UniformExponent(int(k), float(np.max(per_orbit)), per_orbit, int(n_steps), int(seed))


# -- Oseledec splitting ------------------------------------------------------


def cluster_exponents(exponents, half_widths=None, floor=GAP_FLOOR):
    """Group sorted exponents into blocks of (numerically) equal exponents.

    Consecutive exponents separated by at least the threshold
    max(10 * half-width, floor) start a new block; gaps below half the
    threshold are merged; anything in between is ambiguous.

    Returns a list of (start, stop) index pairs.
    """
    ex = np.asarray(exponents, dtype=float)
    hw = 0.0 if half_widths is None else float(np.max(np.asarray(half_widths), initial=0.0))
    tau = max(10.0 * hw, floor)
    blocks = []
    start = 0
    for i in range(1, len(ex)):
        gap = ex[i - 1] - ex[i]
        if gap >= tau:
            blocks.append((start, i))
            start = i
        elif gap >= 0.5 * tau:
            raise DegenerateSplittingError(
                f"exponents {ex[i - 1]:.6g} and {ex[i]:.6g} are neither resolved nor equal "
                f"(gap {gap:.3g}, threshold {tau:.3g})",
                exponents=(ex[i - 1], ex[i]),
            )
    blocks.append((start, len(ex)))
    return blocks


def _generic_frame(d, seed):
    G = np.random.default_rng([int(seed), 7919]).standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    return np.ascontiguousarray(Q * np.sign(np.diag(R)))


def _intersect(U, W, dim):
    """Orthonormal basis of span(U) & span(W), expected to have dimension ``dim``."""
    d = U.shape[0]
    Qw, _ = np.linalg.qr(W, mode="complete")
    Wperp = Qw[:, W.shape[1]:]
    if Wperp.shape[1] == 0:
        C = U
    else:
        _, _, Vh = np.linalg.svd(Wperp.T @ U)
        C = U @ Vh[-dim:].T
    Q, _ = np.linalg.qr(C)
    return Q[:, :dim] if Q.shape[1] >= dim else Q


@dataclass(frozen=True)
class OseledecFrame:
    """Oseledec splitting at a point: unit basis vectors grouped into blocks."""

    x: np.ndarray
    basis: np.ndarray
    block_dims: tuple
    block_exponents: tuple
    exponents: np.ndarray
    half_width: float = 0.0
    n_probe: int = 60
    seed: int = 0

    @property
    def n_blocks(self):
        return len(self.block_dims)

    def block(self, i):
        start = sum(self.block_dims[:i])
        return self.basis[:, start:start + self.block_dims[i]]

    @property
    def condition(self):
        return float(np.linalg.cond(self.basis))


@dataclass
class OrbitFrames:
    """Oseledec blocks along an orbit segment x_t, t in [lo, hi].

    ``bases[t - lo][i]`` is an orthonormal basis of block i at x_t;
    ``forward_jac(t)`` = D f at x_t, ``backward_jac(t)`` = D f^{-1} at x_t.
    """

    lo: int
    hi: int
    points: np.ndarray
    bases: list
    block_dims: tuple
    _jf: np.ndarray = field(repr=False)
    _jb: np.ndarray = field(repr=False)
    _offset: int = field(repr=False)

    def point(self, t):
        return self.points[t + self._offset]

    def forward_jac(self, t):
        return self._jf[t + self._offset]

    def backward_jac(self, t):
        return self._jb[t + self._offset]

    def block_basis(self, t, i):
        return self.bases[t - self.lo][i]

    def forward_transfer(self, t, i):
        """Matrix of D f: block i at x_t -> block i at x_{t+1} in the stored bases."""
        return self.block_basis(t + 1, i).T @ self.forward_jac(t) @ self.block_basis(t, i)

    def backward_transfer(self, t, i):
        return self.block_basis(t - 1, i).T @ self.backward_jac(t) @ self.block_basis(t, i)


def orbit_frames(sys, x, lo, hi, block_dims, n_probe=60, seed=0):
    """Oseledec blocks at every x_t with lo <= t <= hi (lo <= 0 <= hi).

    Orbit points for t > 0 come from forward iteration of x and for t < 0
    from backward iteration, so no orbit is ever iterated back over itself.
    """
    if lo > 0 or hi < 0:
        raise ValidationError("need lo <= 0 <= hi")
    d = sys.dim
    L = -lo + n_probe
    H = hi + n_probe
    x = np.ascontiguousarray(sys.check_point(x))
    pts_f, jf_f = _kernels.orbit(x, H, False, *sys.packed)
    pts_b, jb_b = _kernels.orbit(x, L, True, *sys.packed)
    points = np.concatenate([pts_b[::-1], pts_f[1:]])  # t = -L .. H
    # forward Jacobians at t = -L..-1 and backward ones at t = 1..H
    _, jf_neg = _kernels.points_jacobians(np.ascontiguousarray(pts_b[1:][::-1]), False, *sys.packed)
    _, jb_pos = _kernels.points_jacobians(np.ascontiguousarray(pts_f[1:]), True, *sys.packed)
    nan = np.full((1, d, d), np.nan)
    jf = np.concatenate([jf_neg, jf_f, nan])  # index t + L, t = -L..H
    jb = np.concatenate([nan, jb_b[::-1], jb_pos])

    Q0 = _generic_frame(d, seed)
    fast, _ = _kernels.qr_sweep(np.ascontiguousarray(jf[: L + H]), Q0)  # s <-> t = -L + s
    slow, _ = _kernels.qr_sweep(np.ascontiguousarray(jb[1:][::-1]), Q0)  # s <-> t = H - s

    cum = np.cumsum((0,) + tuple(block_dims))
    bases = []
    for t in range(lo, hi + 1):
        Qf = fast[t + L]
        Qs = slow[H - t]
        blocks = []
        for i, di in enumerate(block_dims):
            U = Qf[:, : cum[i + 1]]
            W = Qs[:, : d - cum[i]]
            blocks.append(_intersect(U, W, di))
        bases.append(blocks)
    return OrbitFrames(lo, hi, points, bases, tuple(block_dims), jf, jb, L)


def oseledec_frame(sys, x, n_probe=60, spectrum=None, seed=0, n_spectrum_steps=20000):
    """Oseledec splitting at ``x``.

    Blocks are grouped from ``spectrum`` (computed from ``x`` when not
    given); expanding directions come from pushing a generic frame forward
    from f^{-n_probe}(x), contracting ones from pulling back from
    f^{n_probe}(x).
    """
    if n_probe < 1:
        raise ValidationError("n_probe must be >= 1")
    x = sys.check_point(x)
    if spectrum is None:
        spectrum = qr_spectrum(sys, x, n_spectrum_steps)
    blocks = cluster_exponents(spectrum.exponents, spectrum.half_width)
    dims = tuple(b - a for a, b in blocks)
    lams = tuple(float(np.mean(spectrum.exponents[a:b])) for a, b in blocks)
    frames = orbit_frames(sys, x, 0, 0, dims, n_probe=n_probe, seed=seed)
    basis = np.concatenate(frames.bases[0], axis=1)
    if basis.shape != (sys.dim, sys.dim) or np.linalg.cond(basis) >= 1e8:
        raise DegenerateSplittingError(
            "Oseledec blocks do not span the tangent space", exponents=spectrum.exponents
        )
    return OseledecFrame(
        x=x,
        basis=basis,
        block_dims=dims,
        block_exponents=lams,
        exponents=spectrum.exponents,
        half_width=spectrum.max_half_width,
        n_probe=int(n_probe),
        seed=int(seed),
    )


def principal_angle(U, V):
    """Largest principal angle between the column spans of U and V."""
    return float(np.max(subspace_angles(np.asarray(U), np.asarray(V))))
