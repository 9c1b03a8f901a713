"""Numerical checks of the spectral-radius inequalities and their reports.

Each ``check_*`` function returns a :class:`VerificationReport` holding one
or more claims; every claim is a table of rows comparing an exponent with a
bound. The inequalities are exact while the estimators are not, so a
row is only VIOLATED when its slack is below ``-(3 * stderr + 1e-3)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cocycle import ensemble_points, exterior_log_norms, qr_spectrum, uniform_exponent
from .errors import TorusLyapError
from .forms import cohomology_action, entropy_estimate, total_spectral_radius, volume_growth
from .metric import lp_estimate
from .systems import has_root_of_unity_eigenvalue, system_to_dict

__all__ = [
    "HOLDS",
    "WITHIN",
    "VIOLATED",
    "HYPOTHESIS_FAILED",
    "FAILED",
    "RunParams",
    "Row",
    "Claim",
    "VerificationReport",
    "check_uniform_bound",
    "check_subexponential",
    "check_sigma_bounds",
    "check_metric_bound",
    "check_entropy_equality",
    "run_checks",
    "exit_code",
    "sig12",
]

HOLDS = "HOLDS"
WITHIN = "HOLDS-WITHIN-TOLERANCE"
VIOLATED = "VIOLATED"
HYPOTHESIS_FAILED = "HYPOTHESIS-FAILED"
FAILED = "FAILED"

ABS_TOL = 1e-3
SIGMA_MULT = 3.0
COHOMOLOGY_NOTE = (
    "rows list eigenvalues of the induced map on cohomology; by universal "
    "coefficients the induced map on homology has the same spectrum"
)


def sig12(v):
    """Round to 12 significant digits (None for non-finite values)."""
    if v is None:
        return None
    v = float(v)
    if not math.isfinite(v):
        return None
    return float(f"{v:.12g}")


@dataclass(frozen=True)
class RunParams:
    seed: int = 0
    steps: int = 100_000  # long QR / exterior runs
    transient: int = 1000
    ensemble: int = 8  # orbits for long runs
    sup_ensemble: int = 2048  # points for the finite-horizon sup
    horizon: int = 64  # finite horizon for the sup
    samples: int = 10_000  # volume-growth and entropy samples
    growth_n: int = 50
    metric_samples: int = 48
    epsilon: float = 0.1


@dataclass
class Row:
    """One comparison ``value <= bound`` (or ``value == bound`` when two-sided)."""

    k: int
    re_lambda: float
    bound: float
    stderr: float
    kind: str
    tolerance: float = None
    two_sided: bool = False
    verdict: str = None
    note: str = ""
    slack: float = field(init=False)

    def __post_init__(self):
        self.re_lambda = sig12(self.re_lambda)
        self.bound = sig12(self.bound)
        self.stderr = sig12(self.stderr if self.stderr is not None else 0.0)
        if self.tolerance is None:
            self.tolerance = SIGMA_MULT * (self.stderr or 0.0) + ABS_TOL
        self.tolerance = sig12(self.tolerance)
        if self.re_lambda is None or self.bound is None:
            self.slack = None
            self.verdict = self.verdict or FAILED
            return
        self.slack = sig12(self.bound - self.re_lambda)
        if self.verdict is None:
            self.verdict = self._judge()

    def _judge(self):
        s = self.slack
        if self.two_sided:
            if s == 0:
                return HOLDS
            return WITHIN if abs(s) <= self.tolerance else VIOLATED
        if s >= 0:
            return HOLDS
        return WITHIN if s >= -self.tolerance else VIOLATED

    def to_dict(self):
        return {
            "k": self.k,
            "kind": self.kind,
            "re_lambda": self.re_lambda,
            "bound": self.bound,
            "slack": self.slack,
            "stderr": self.stderr,
            "tolerance": self.tolerance,
            "two_sided": self.two_sided,
            "verdict": self.verdict,
            "note": self.note,
        }


_SEVERITY = {HOLDS: 0, WITHIN: 1, HYPOTHESIS_FAILED: 2, FAILED: 3, VIOLATED: 4}


@dataclass
class Claim:
    name: str
    rows: list = field(default_factory=list)
    hypothesis: dict = field(default_factory=dict)
    hypothesis_ok: bool = True
    notes: list = field(default_factory=list)

    @property
    def verdict(self):
        if not self.hypothesis_ok:
            return HYPOTHESIS_FAILED
        if not self.rows:
            return HOLDS
        return max((r.verdict for r in self.rows), key=_SEVERITY.__getitem__)

    def to_dict(self):
        return {
            "name": self.name,
            "verdict": self.verdict,
            "hypothesis": self.hypothesis,
            "rows": [r.to_dict() for r in self.rows],
            "notes": list(self.notes),
        }


@dataclass
class VerificationReport:
    system_id: str
    system: dict
    params: RunParams
    claims: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        blob = json.dumps({"system": self.system, "params": asdict(self.params)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def claim(self, name):
        for c in self.claims:
            if c.name == name:
                return c
        raise KeyError(name)

    def merge(self, other):
        self.claims.extend(other.claims)
        self.diagnostics.update(other.diagnostics)
        return self

    def select(self, names):
        out = VerificationReport(self.system_id, self.system, self.params, diagnostics=self.diagnostics)
        out.claims = [c for c in self.claims if c.name in names]
        return out

    def rows(self):
        return [(c.name, r) for c in self.claims for r in c.rows]

    def to_dict(self):
        p = asdict(self.params)
        return {
            "system": {"id": self.system_id, "config_hash": self.config_hash, "spec": self.system},
            "claims": [c.to_dict() for c in self.claims],
            "diagnostics": _clean(self.diagnostics),
            "provenance": {
                "seed": p["seed"],
                "steps": p["steps"],
                "params": _clean(p),
                "note": COHOMOLOGY_NOTE,
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self):
        import csv
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["k", "kind", "re_lambda", "bound", "slack", "stderr", "tolerance", "verdict"]
        w.writerow(["system", "claim"] + cols)
        for name, r in self.rows():
            d = r.to_dict()
            w.writerow([self.system_id, name] + ["" if d[c] is None else d[c] for c in cols])
        return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return sig12(obj)
    return obj


def _report(sys, params):
    return VerificationReport(sys.name, system_to_dict(sys), params)


def _failed_claim(name, exc):
    c = Claim(name)
    c.rows.append(Row(-1, None, None, 0.0, "error", verdict=FAILED, note=f"{type(exc).__name__}: {exc}"))
    return c


def _guarded(name, fn):
    try:
        return fn()
    except TorusLyapError as exc:
        return _failed_claim(name, exc)


# -- shared estimators --------------------------------------------------------


def _long_spectra(sys, params):
    xs = ensemble_points(sys.dim, params.ensemble, params.seed)
    return [qr_spectrum(sys, x, params.steps, params.transient) for x in xs]


def _sup_points(sys, params):
    return ensemble_points(sys.dim, params.sup_ensemble, params.seed + 1)


def _finite_sigma(sys, params):
    """Per point (1/n) log max_k ||compound(Phi(n,x),k)||: the finite-time sum of positive exponents."""
    xs = _sup_points(sys, params)
    logs = np.stack([exterior_log_norms(sys, k, xs, params.horizon) for k in range(sys.dim + 1)])
    return logs.max(axis=0) / params.horizon


def _sem(v):
    v = np.asarray(v, dtype=float)
    return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


# -- checks -----------------------------------------------------------------


def _uniform_bound_claim(sys, params):
    claim = Claim("uniform_bound")
    claim.notes.append(
        f"bound = max over {params.sup_ensemble} seeded points of the horizon-{params.horizon} "
        "exterior exponent (finite-horizon sup; by subadditivity it does not undershoot the limit)"
    )
    for k in range(sys.dim + 1):
        ue = uniform_exponent(sys, k, params.sup_ensemble, params.horizon, params.seed + 1)
        for e in cohomology_action(sys, k).eigen:
            claim.rows.append(Row(k, e.re, ue.value, ue.stderr, "uniform-exponent",
                                  note=f"ensemble spread {sig12(ue.spread)}"))
    return claim


def check_uniform_bound(sys, params=RunParams()):
    """Re(lambda) of every H^k(f) eigenvalue against the uniform exponent of Df^{wedge k}."""
    rep = _report(sys, params)
    rep.claims.append(_guarded("uniform_bound", lambda: _uniform_bound_claim(sys, params)))
    return rep


def _subexponential_claim(sys, params):
    claim = Claim("subexponential")
    xs = ensemble_points(sys.dim, params.ensemble, params.seed)
    hyp = {}
    for k in range(1, sys.dim + 1):
        vals = exterior_log_norms(sys, k, xs, params.steps) / params.steps
        hyp[f"uniform_exponent_k{k}"] = sig12(np.max(vals))
        if np.max(vals) > SIGMA_MULT * _sem(vals) + ABS_TOL:
            claim.hypothesis_ok = False
    claim.hypothesis = hyp
    if not claim.hypothesis_ok:
        claim.notes.append("hypothesis failed: some uniform exponent is positive; claim not evaluated")
        return claim
    sp, deg = total_spectral_radius(sys)
    claim.rows.append(Row(deg, math.log(sp), 0.0, 0.0, "log-spectral-radius-zero", tolerance=1e-9,
                          two_sided=True))
    return claim


def check_subexponential(sys, params=RunParams()):
    """For (measured) uniformly subexponential systems, log sp(f_*) = 0."""
    rep = _report(sys, params)
    rep.claims.append(_guarded("subexponential", lambda: _subexponential_claim(sys, params)))
    return rep


def _sigma_claims(sys, params):
    sp, deg = total_spectral_radius(sys)
    log_sp = math.log(sp)
    sig = _finite_sigma(sys, params)
    b = Claim("sigma_bound")
    b.notes.append("bound = ensemble sup of the finite-horizon sum of positive exponents")
    b.rows.append(Row(deg, log_sp, float(np.max(sig)), _sem(sig), "ensemble-sup-sigma"))
    c = Claim("exponent_signs")
    if log_sp <= 1e-9:
        c.notes.append("log sp = 0: positivity clause is vacuous")
        return [b, c]
    spectra = _long_spectra(sys, params)
    top = np.array([s.exponents[0] for s in spectra])
    bottom = np.array([s.exponents[-1] for s in spectra])
    hw = max(s.max_half_width for s in spectra)
    i_top, i_bot = int(np.argmax(top)), int(np.argmin(bottom))
    c.rows.append(Row(1, SIGMA_MULT * hw, top[i_top], hw, "positive-exponent", tolerance=0.0,
                      note=f"orbit {i_top}: lambda_1 must exceed 3 stderr"))
    if abs(sys.det) == 1:
        c.rows.append(Row(sys.dim, bottom[i_bot], -SIGMA_MULT * hw, hw, "negative-exponent",
                          tolerance=0.0, note=f"orbit {i_bot}: lambda_n must be below -3 stderr"))
    return [b, c]


def check_sigma_bounds(sys, params=RunParams()):
    """log sp(f_*) against the sup of the sum of positive exponents, and exponent signs."""
    rep = _report(sys, params)
    try:
        rep.claims.extend(_sigma_claims(sys, params))
    except TorusLyapError as exc:
        rep.claims.append(_failed_claim("sigma_bound", exc))
    return rep


def _finite_n_margin(dim, k, lp_half_k, n):
    """log(C_k)/n for the constant in the integrated exterior growth bound.

    The g- and h-norms of k-vectors differ by at most dim^k at the source
    (g <= dim^2 h) and by ||compound(h, k)||^(1/2) <= (C(dim,k) dim^(k/2))^(1/2)
    ||h||_F^(k/2) at the image; the h-growth constant is at most (dim!)^dim;
    and the image term integrates to the L^(k/2) integral of h by invariance
    of the volume.
    """
    est = lp_half_k.estimate
    if lp_half_k.n_excluded or not math.isfinite(est) or est <= 0:
        return math.inf
    c = dim ** k * math.factorial(dim) ** dim * math.sqrt(math.comb(dim, k) * dim ** (k / 2)) * est
    return max(math.log(c), 0.0) / n


def _metric_claims(sys, eps, p_list, params):
    spectra = _long_spectra(sys, params)
    n = sys.dim
    hw = max(s.max_half_width for s in spectra)
    lam_sup = {k: max(s.top_sum(k) for s in spectra) for k in range(n + 1)}
    lam_se = {k: max(hw * k, _sem([s.top_sum(k) for s in spectra])) for k in range(n + 1)}
    sigma_sup = max(s.sigma_plus for s in spectra)
    sigma_se = max(hw * n, _sem([s.sigma_plus for s in spectra]))

    ps = sorted(set(list(p_list) + [k / 2 for k in range(1, n + 1)]))
    hyp = {}
    lp = {}
    for p in ps:
        est = lp_estimate(sys, eps, p, params.metric_samples, params.seed, spectrum=spectra[0])
        lp[p] = est
        hyp[f"p={p:g}"] = {
            "estimate": sig12(est.estimate),
            "stderr": sig12(est.stderr),
            "top1_mass": sig12(est.top1_mass),
            "excluded": est.n_excluded,
            "heavy_tailed": bool(est.heavy_tailed),
            "is_norm": bool(est.is_norm),
        }

    def indicated(p):
        e = lp[p]
        return e.n_excluded == 0 and e.n_used > 0 and math.isfinite(e.estimate)

    tb = Claim("metric_bound", hypothesis=hyp)
    for k in range(1, n + 1):
        ok = indicated(k / 2)
        for e in cohomology_action(sys, k).eigen:
            row = Row(k, e.re, lam_sup[k] + k * eps, lam_se[k], "ess-sup-Lambda_k+k*eps",
                      note="" if ok else f"L^{k / 2:g} hypothesis not indicated")
            if not ok:
                row.verdict = HYPOTHESIS_FAILED
            tb.rows.append(row)
        if lp[k / 2].heavy_tailed:
            tb.notes.append(f"heavy tail at p={k / 2:g}: top 1% of samples carry {lp[k / 2].top1_mass:.3g}")

    cd = Claim("sigma_metric_bound", hypothesis={f"p={n / 2:g}": hyp[f"p={n / 2:g}"]})
    sp, deg = total_spectral_radius(sys)
    row = Row(deg, math.log(sp), sigma_sup + n * eps, sigma_se, "ess-sup-Sigma+dim*eps")
    if not indicated(n / 2):
        row.verdict = HYPOTHESIS_FAILED
    cd.rows.append(row)

    vg = Claim("volume_growth_bound")
    vg.notes.append(
        f"volume growth at n={params.growth_n} with {params.samples} samples; tolerance adds the "
        "finite-n margin log(C_k)/n, C_k = dim^k (dim!)^dim sqrt(C(dim,k) dim^(k/2)) (L^(k/2) integral of h)"
    )
    for k in range(1, n + 1):
        g = volume_growth(sys, k, params.growth_n, params.samples, params.seed)
        se = math.hypot(g.stderr, lam_se[k])
        margin = _finite_n_margin(n, k, lp[k / 2], params.growth_n)
        known = math.isfinite(margin)
        row = Row(k, g.value, lam_sup[k] + k * eps, se, "volume-growth",
                  tolerance=SIGMA_MULT * se + ABS_TOL + (margin if known else 0.0),
                  note=f"finite-n margin {sig12(margin)}" if known
                  else f"finite-n margin unavailable: L^{k / 2:g} integral not estimated")
        if not known and row.verdict == VIOLATED:
            row.verdict = HYPOTHESIS_FAILED
        vg.rows.append(row)
    return [tb, cd, vg], {"Lambda_k_sup": [lam_sup[k] for k in range(n + 1)], "Sigma_sup": sigma_sup}


def check_metric_bound(sys, eps=None, p_list=(), params=RunParams()):
    """Re(lambda) against ess-sup Lambda_k + k eps, with metric integrability diagnostics.

    Also reports the dimension-level bound on log sp(f_*) and the volume-growth
    comparison that sits between the two sides of the inequality.
    """
    eps = params.epsilon if eps is None else float(eps)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    rep = _report(sys, params)
    try:
        claims, diag = _metric_claims(sys, eps, p_list, params)
        rep.claims.extend(claims)
        rep.diagnostics["metric_bound"] = diag
    except TorusLyapError as exc:
        rep.claims.append(_failed_claim("metric_bound", exc))
    return rep


def _entropy_claim(sys, params):
    spectra = _long_spectra(sys, params)
    sig = np.array([s.sigma_plus for s in spectra])
    hw = max(s.max_half_width for s in spectra)
    sigma = float(np.mean(sig))
    sigma_se = max(_sem(sig), hw * sys.dim)
    ent = entropy_estimate(sys, params.growth_n, params.samples, params.seed)
    se = math.hypot(ent.stderr, sigma_se)
    ergodic = not has_root_of_unity_eigenvalue(sys.matrix)
    claim = Claim("entropy_equality", hypothesis={"linear_part_ergodic": ergodic})
    row = Row(sys.dim, ent.value, sigma, se, "entropy-vs-Sigma",
              tolerance=SIGMA_MULT * se + 0.05 * abs(sigma), two_sided=True,
              note="volume-growth entropy estimate against the mean sum of positive exponents")
    if row.verdict == VIOLATED and row.slack < 0:
        # Sigma <= h_top holds unconditionally; only h_top <= Sigma needs the
        # integrability hypothesis, so entropy above Sigma means it fails here
        row.verdict = HYPOTHESIS_FAILED
        row.note += "; entropy above Sigma: the metric integrability hypothesis fails or n is too short"
    claim.rows.append(row)
    return claim


def check_entropy_equality(sys, params=RunParams()):
    """Volume-growth entropy against the volume's sum of positive exponents (equality expected)."""
    rep = _report(sys, params)
    rep.claims.append(_guarded("entropy_equality", lambda: _entropy_claim(sys, params)))
    return rep


def run_checks(sys, which, params=RunParams()):
    """Run one selector of ``a, acor, b, bc, d, f, all`` and return a merged report."""
    rep = _report(sys, params)
    if which in ("a", "all"):
        rep.merge(check_uniform_bound(sys, params))
    if which in ("acor", "all"):
        rep.merge(check_subexponential(sys, params))
    if which in ("bc", "all"):
        rep.merge(check_sigma_bounds(sys, params))
    if which in ("b", "d", "all"):
        b = check_metric_bound(sys, params.epsilon, (), params)
        if which == "d" and any(c.name == "sigma_metric_bound" for c in b.claims):
            b = b.select({"sigma_metric_bound"})
        rep.merge(b)
    if which in ("f", "all"):
        rep.merge(check_entropy_equality(sys, params))
    if which not in ("a", "acor", "b", "bc", "d", "f", "all"):
        raise ValueError(f"unknown check {which!r}")
    return rep


def exit_code(reports):
    """0 all hold; 2 any violation; 3 only hypothesis failures; 4 internal failure."""
    verdicts = [r.verdict for rep in reports for c in rep.claims for r in c.rows]
    verdicts += [c.verdict for rep in reports for c in rep.claims]
    if VIOLATED in verdicts:
        return 2
    if FAILED in verdicts:
        return 4
    if HYPOTHESIS_FAILED in verdicts:
        return 3
    return 0
