"""Lyapunov metrics h^eps at sample points and their integrability.

On each Oseledec block H_i the metric is the two-sided series

    h_i(u, v) = sum_n exp(-2|n| eps - 2 n lam_i) <Phi(n, x) u, Phi(n, x) v>

and distinct blocks are declared orthogonal. The block cocycle is carried in
orthonormal block bases along the orbit (see
:class:`toruslyap.cocycle.OrbitFrames`), so contracting directions are never
swamped by expanding ones when pushed forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import oseledec_frame, orbit_frames, qr_spectrum, ensemble_points
from .errors import DegenerateSplittingError, MetricDivergenceError, NumericError, ValidationError
from .linalg import compound, induced_gram_power, operator_norm, psd_inv_sqrt, psd_sqrt

__all__ = [
    "MetricSample",
    "LpEstimate",
    "GrowthRatio",
    "metric_at",
    "lp_estimate",
    "growth_ratio_check",
]

RATIO_WINDOW = 5
N_MAX = 4096


@dataclass(frozen=True)
class MetricSample:
    """Gram matrix of h^eps at ``x`` in the standard (g-orthonormal) frame."""

    x: np.ndarray
    epsilon: float
    gram: np.ndarray
    block_grams: tuple  # in the frame's orthonormal block bases
    truncation: tuple  # N used per block
    tail_bound: float  # relative, geometric majorant of the dropped terms
    frame: object = field(repr=False, default=None)

    def induced(self, k):
        return induced_gram_power(self.gram, k)

    @property
    def frobenius(self):
        return float(np.linalg.norm(self.gram))


def _needed_terms(eps, tol):
    return int(math.ceil(math.log(1.0 / tol) / (2.0 * eps))) + 4 * RATIO_WINDOW


def _block_series(frames, t, i, lam, eps, tol, n_avail):
    """Partial sums of the block-i series at x_t, stopping by the truncation rule.

    Returns (gram, N, relative tail bound) or None if ``n_avail`` terms per
    side were not enough.
    """
    U0 = frames.block_basis(t, i)
    d = U0.shape[1]
    S = np.eye(d)
    mags = [float(d)]
    Pp, sp = np.eye(d), 0.0
    Pm, sm = np.eye(d), 0.0
    for j in range(1, n_avail + 1):
        Pp = frames.forward_transfer(t + j - 1, i) @ Pp
        Pm = frames.backward_transfer(t - j + 1, i) @ Pm
        for which in (0, 1):
            P = Pp if which == 0 else Pm
            r = float(np.max(np.abs(P)))
            if not math.isfinite(r) or r == 0.0:
                raise MetricDivergenceError("block cocycle degenerated", block=i, step=j)
            P /= r
            if which == 0:
                sp += math.log(r)
            else:
                sm += math.log(r)
        wp = math.exp(-2 * j * eps - 2 * j * lam + 2 * sp)
        wm = math.exp(-2 * j * eps + 2 * j * lam + 2 * sm)
        term = wp * (Pp.T @ Pp) + wm * (Pm.T @ Pm)
        if not np.all(np.isfinite(term)):
            raise MetricDivergenceError(f"series for block {i} overflowed", block=i, step=j)
        S = S + term
        mag = float(np.trace(term))
        mags.append(mag)
        if j >= RATIO_WINDOW and mags[j - RATIO_WINDOW] > 0:
            ratio = (mag / mags[j - RATIO_WINDOW]) ** (1.0 / RATIO_WINDOW)
            total = float(np.trace(S))
            if mag < tol * total and ratio < math.exp(-eps):
                tail = mag * ratio / (1.0 - ratio) / total
                return 0.5 * (S + S.T), j, tail
    return None


def _assemble(bases, grams):
    B = np.concatenate(bases, axis=1)
    M = np.zeros((B.shape[1], B.shape[1]))
    s = 0
    for G in grams:
        d = G.shape[0]
        M[s:s + d, s:s + d] = G
        s += d
    Binv = np.linalg.inv(B)
    gram = Binv.T @ M @ Binv
    return 0.5 * (gram + gram.T)


def _metric_along(sys, frame, eps, tol, ts, n_max=N_MAX):
    """Metric samples at x_t for t in ``ts`` (t >= 0) along the forward orbit of frame.x."""
    lams = frame.block_exponents
    t_hi = max(ts)
    N = _needed_terms(eps, tol)
    while True:
        frames = orbit_frames(sys, frame.x, -N, t_hi + N, frame.block_dims, frame.n_probe, frame.seed)
        frames.bases[-frames.lo] = [frame.block(i) for i in range(frame.n_blocks)]
        out = []
        short = None
        for t in ts:
            grams, used, tails = [], [], []
            for i, lam in enumerate(lams):
                res = _block_series(frames, t, i, lam, eps, tol, N)
                if res is None:
                    short = i
                    break
                grams.append(res[0])
                used.append(res[1])
                tails.append(res[2])
            if short is not None:
                break
            bases = [frames.block_basis(t, i) for i in range(len(lams))]
            out.append(
                MetricSample(
                    x=frames.point(t),
                    epsilon=float(eps),
                    gram=_assemble(bases, grams),
                    block_grams=tuple(grams),
                    truncation=tuple(used),
                    tail_bound=float(max(tails)),
                    frame=frame if t == 0 else None,
                )
            )
        if short is None:
            return out, frames
        if N >= n_max:
            raise MetricDivergenceError(
                f"terms for block {short} (exponent {lams[short]:.6g}) did not decay by |n| = {N}",
                block=short,
                step=N,
            )
        N = min(2 * N, n_max)


def metric_at(sys, frame, eps, tol=1e-10, n_max=N_MAX):
    """The Lyapunov metric h^eps at ``frame.x``.

    The series is cut at the first N where the last term is below
    ``tol`` times the partial sum and the per-step term ratio over the last
    five steps is below exp(-eps).
    """
    if eps <= 0:
        raise ValidationError("epsilon must be positive")
    samples, _ = _metric_along(sys, frame, eps, tol, [0], n_max)
    return samples[0]


@dataclass(frozen=True)
class LpEstimate:
    """Monte Carlo estimate of the integral of ||h_x||_F^p over the torus."""

    p: float
    epsilon: float
    estimate: float
    stderr: float
    top1_mass: float  # share of the sum carried by the largest 1% of samples
    n_used: int
    n_excluded: int
    values: np.ndarray = field(repr=False)

    @property
    def is_norm(self):
        return self.p >= 1

    @property
    def heavy_tailed(self):
        # 1% of the samples carrying over 10% of the mass
        return self.top1_mass > 0.1


def lp_estimate(sys, eps, p, n_samples, seed=0, n_probe=60, spectrum=None, tol=1e-10):
    """Estimate the L^p integral of the Lyapunov metric (p < 1 allowed).

    Block structure comes from ``spectrum`` (one reference orbit when not
    given), which is appropriate for ergodic systems. Samples whose series
    diverge or whose splitting degenerates are excluded and counted.
    """
    if p <= 0:
        raise ValidationError("p must be positive")
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if spectrum is None:
        spectrum = qr_spectrum(sys, ensemble_points(sys.dim, 1, seed)[0], 20000)
    xs = np.random.default_rng(seed).random((int(n_samples), sys.dim))
    vals = []
    excluded = 0
    for x in xs:
        try:
            frame = oseledec_frame(sys, x, n_probe=n_probe, spectrum=spectrum, seed=seed)
            sample = metric_at(sys, frame, eps, tol)
        except (MetricDivergenceError, DegenerateSplittingError, NumericError):
            excluded += 1
            continue
        vals.append(sample.frobenius ** p)
    vals = np.array(vals)
    if len(vals) == 0:
        return LpEstimate(float(p), float(eps), math.nan, math.nan, math.nan, 0, excluded, vals)
    total = float(vals.sum())
    top = max(1, int(math.ceil(0.01 * len(vals))))
    top1 = float(np.sort(vals)[-top:].sum() / total) if total > 0 else 0.0
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return LpEstimate(float(p), float(eps), float(vals.mean()), se, top1, len(vals), excluded, vals)


@dataclass(frozen=True)
class GrowthRatio:
    """||compound(Phi(n, x), k)||_{h^{eps,k}} / exp(n (Lambda_k + k eps)) for n = 0..n_max."""

    k: int
    epsilon: float
    ratios: np.ndarray
    slope: float  # least-squares slope of log ratio per step

    @property
    def max_ratio(self):
        return float(np.max(self.ratios))

    @property
    def argmax(self):
        return int(np.argmax(self.ratios))


def growth_ratio_check(sys, frame, eps, k, n_max, tol=1e-10):
    """Exterior-power growth of the cocycle measured in the Lyapunov metric.

    The h^{eps,k} operator norm is G_n^{1/2} compound(Phi(n,x), k) G_0^{-1/2}
    with G the induced Gram matrices at x and f^n(x).
    """
    if not 1 <= k <= sys.dim:
        raise ValidationError(f"k must lie in [1, {sys.dim}]")
    samples, frames = _metric_along(sys, frame, eps, tol, list(range(n_max + 1)))
    lam_k = float(np.sum(frame.exponents[:k]))
    G0 = samples[0].induced(k)
    G0_inv_half = psd_inv_sqrt(G0)
    P = np.eye(sys.dim)
    log_ratios = []
    for n in range(n_max + 1):
        if n > 0:
            P = frames.forward_jac(n - 1) @ P
        Gn_half = psd_sqrt(samples[n].induced(k))
        norm = operator_norm(Gn_half @ compound(P, k) @ G0_inv_half)
        log_ratios.append(math.log(norm) - n * (lam_k + k * eps))
    log_ratios = np.array(log_ratios)
    ns = np.arange(n_max + 1)
    slope = float(np.polyfit(ns, log_ratios, 1)[0]) if n_max >= 1 else 0.0
    return GrowthRatio(int(k), float(eps), np.exp(log_ratios), slope)
