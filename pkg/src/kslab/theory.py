"""Closed-form constants of the stabilization argument.

Everything here is a pure function of scalars. The nonconstructive
constants (the signal lower bound ``K1``, the sup bound ``K5``, the heat
kernel lower bound ``c0``) enter only as arguments; callers decide whether
they are configured or estimated from a run.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_open_interval, check_positive
from .exceptions import (
    DomainError,
    HypothesisViolation,
    InfeasibleError,
    SaturationError,
    SearchExhaustedError,
)
from .model import SensitivitySpec, eval_sensitivity

PHI_EXPONENT_CAP = 700.0
P_GAP = 1e-6

CLOSED_FORM = "closed_form"
EMPIRICAL = "empirical"
CONFIGURED = "configured"


def eta(c0, M, v_star):
    """Time-independent lower bound for the signal.

    ``4 (1 + sqrt(1 + 4 v*/(c0 M)))**-2 * v*``, always in ``(0, v*)``.
    """
    c0 = check_positive("c0", c0)
    M = check_positive("M", M)
    v_star = check_positive("v_star", v_star)
    return 4.0 * v_star / (1.0 + math.sqrt(1.0 + 4.0 * v_star / (c0 * M))) ** 2


def eta_c0_sensitivity(c0, M, v_star):
    """``(d eta / d c0, elasticity (c0/eta) d eta / d c0)``; the elasticity lies in (0, 1)."""
    c0 = check_positive("c0", c0)
    M = check_positive("M", M)
    v_star = check_positive("v_star", v_star)
    q = math.sqrt(1.0 + 4.0 * v_star / (c0 * M))
    d = 16.0 * v_star**2 / (q * c0**2 * M * (1.0 + q) ** 3)
    return d, d * c0 / eta(c0, M, v_star)


def chi_star(a, k, n, eta):
    """Global-existence threshold ``k (a+eta)**(k-1) sqrt(2/n)``."""
    check_positive("a", a, strict=False)
    check_positive("eta", eta)
    if k <= 1 or n < 1:
        raise DomainError(f"need k > 1 and n >= 1, got k={k}, n={n}")
    return k * (a + eta) ** (k - 1) * math.sqrt(2.0 / n)


def _phi_exponent(s, r, a, k):
    s = np.asarray(s, dtype=np.float64)
    if np.any(a + s <= 0):
        raise DomainError("phi requires a + s > 0")
    return r / ((k - 1) * (a + s) ** (k - 1))


def phi(s, r, a, k, cap=PHI_EXPONENT_CAP):
    """Weight ``exp{r / ((k-1)(a+s)**(k-1))}``; vectorised over ``s``."""
    if k <= 1:
        raise DomainError(f"k must exceed 1, got {k}")
    check_positive("r", r, strict=False)
    x = _phi_exponent(s, r, a, k)
    if np.any(x > cap):
        raise SaturationError(f"phi exponent {np.max(x):.4g} exceeds cap {cap}")
    out = np.exp(x)
    return float(out) if out.ndim == 0 else out


def dphi_identity_residual(s, r, a, k, h):
    """Relative mismatch between a centred difference of phi and ``-r phi/(a+s)**k``.

    The difference ``phi(s+h) - phi(s-h)`` is formed from exponent
    increments with ``expm1``/``log1p`` so that the result is limited by
    truncation error rather than cancellation.
    """
    if not (s > h > 0):
        raise DomainError(f"need s > h > 0, got s={s}, h={h}")
    base = a + s
    power = 1.0 - k
    coef = r / (k - 1)

    def exponent_increment(step):
        # coef * ((base+step)**power - base**power), cancellation-free
        return coef * base**power * math.expm1(power * math.log1p(step / base))

    d_plus = exponent_increment(h)
    d_minus = exponent_increment(-h)
    phi_s = phi(s, r, a, k)
    # e^{x+dp} - e^{x+dm} = e^{x+dm} * expm1(dp - dm)
    diff = phi_s * math.exp(d_minus) * math.expm1(d_plus - d_minus)
    fd = diff / (2.0 * h)
    exact = -r / base**k * phi_s
    return abs(fd - exact) / abs(exact)


def H_eval(s, eps, p, r, chi, a, k, sensitivity=None):
    """Coefficient of the gradient term in the weighted energy inequality."""
    check_open_interval("eps", eps, 0.0, 1.0)
    if p < 1 + P_GAP:
        raise DomainError(f"p must exceed 1 by at least {P_GAP}, got {p}")
    sensitivity = sensitivity or SensitivitySpec()
    s = np.asarray(s, dtype=np.float64)
    A = (a + s) ** k
    S = eval_sensitivity(sensitivity, a, k, s)
    out = (
        -chi * p * r * S / A
        - r**2 / A**2
        - k * r / (a + s) ** (k + 1)
        + (2 * p * r / A + chi * p * (p - 1) * S) ** 2 / (4 * (1 - eps) * p * (p - 1))
    )
    return float(out) if np.ndim(out) == 0 else out


def H_upper_bound(s, pe, a, k):
    """Domination bound ``k r ((a+eta~)**(k-1) - (a+s)**(k-1)) / (a+s)**(2k)``.

    Valid for every ``chi <= pe.chi0`` and every sensitivity inside the
    envelope.
    """
    s = np.asarray(s, dtype=np.float64)
    return k * pe.r * ((a + pe.eta_tilde) ** (k - 1) - (a + s) ** (k - 1)) / (a + s) ** (2 * k)


def r_of(p, eps, chi0):
    """``(p-1) chi0 / 2 * sqrt(p / (1 + eps p - eps))``."""
    if p <= 1:
        raise DomainError(f"p must exceed 1, got {p}")
    check_open_interval("eps", eps, 0.0, 1.0)
    check_positive("chi0", chi0)
    return (p - 1) * chi0 / 2.0 * math.sqrt(p / (1 + eps * p - eps))


def pe_lhs(p, eps, chi0, k):
    """Left side of the (p, eps) admissibility inequality.

    The middle term uses ``eps p chi0 * max(1, 1/(k(1-eps)))`` so that the
    inequality implies the factored bound on H whether or not
    ``k (1 - eps) >= 1``.
    """
    p = np.asarray(p, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    root = chi0 / (k * (1 - eps)) * np.sqrt(p * (1 + eps * p - eps))
    return root + eps * p * chi0 * np.maximum(1.0, 1.0 / (k * (1 - eps)))


@dataclass(frozen=True)
class AdmissiblePE:
    p: float
    eps: float
    r: float
    margin: float
    chi0: float
    eta_tilde: float
    n: int

    def recheck(self, a, k):
        """Recompute the margin of the defining inequality."""
        return (a + self.eta_tilde) ** (k - 1) - float(pe_lhs(self.p, self.eps, self.chi0, k))


def _p_range(n):
    # p must also exceed 1 for H to be defined, which matters only for n = 1.
    lo = max(n / 2.0, 1.0)
    hi = max(float(n), 2.0)
    return lo, hi


def _search_grid(n, refine):
    lo, hi = _p_range(n)
    n_p = 64 * refine
    ps = lo + (hi - lo) * np.arange(1, n_p + 1) / (n_p + 1)
    epss = np.geomspace(1e-6, 0.9, 64 * refine)
    return ps, epss


def find_admissible_pe(chi0, a, k, n, eta_tilde, refine=True):
    """Grid search for (p, eps) maximising the admissibility margin.

    Ties go to the smaller eps, then the smaller p. If the 64 x 64 grid has
    no feasible point and ``refine`` is set, a single 4x refinement is
    tried before raising :class:`InfeasibleError`.
    """
    check_positive("chi0", chi0)
    check_positive("eta_tilde", eta_tilde)
    cap = chi_star(a, k, n, eta_tilde)
    if chi0 >= cap:
        raise HypothesisViolation(f"chi0={chi0:.6g} must be below chi_star={cap:.6g}")
    target = (a + eta_tilde) ** (k - 1)
    for factor in (1, 4) if refine else (1,):
        ps, epss = _search_grid(n, factor)
        P, E = np.meshgrid(ps, epss, indexing="ij")
        margin = target - pe_lhs(P, E, chi0, k)
        if np.max(margin) < 0:
            continue
        best = np.max(margin)
        # eps-major ordering so argmax picks smaller eps first, then smaller p
        cand = np.argwhere((margin == best).T)
        j, i = cand[0]
        p, e = float(ps[i]), float(epss[j])
        return AdmissiblePE(p, e, r_of(p, e, chi0), float(best), float(chi0), float(eta_tilde), int(n))
    raise InfeasibleError(
        f"no admissible (p, eps) for chi0={chi0:.6g} (chi_star={cap:.6g}); chi0 too close to the threshold"
    )


@dataclass(frozen=True)
class HCertificate:
    passed: bool
    max_H: float
    worst_s: float
    bound_holds: bool
    max_bound_excess: float
    n_samples: int
    chi: float
    within_hypothesis: bool


def certify_H_nonpositive(pe, chi, a, k, sensitivity=None, eta_tilde=None, s_max=None, n_samples=10_000, atol=1e-12):
    """Dense-sampling certificate that H <= 0 on ``[eta~, s_max]``.

    Samples ``n_samples`` log-spaced points on ``[eta~, s_max]`` plus the
    same number on ``[eta~, eta~ (1 + 1e-3)]``. The domination bound is
    also evaluated; it is only asserted when ``chi <= pe.chi0``.
    """
    if n_samples < 1000:
        raise DomainError("n_samples must be at least 1000")
    eta_tilde = pe.eta_tilde if eta_tilde is None else eta_tilde
    s_max = 1e3 * eta_tilde if s_max is None else s_max
    s = np.concatenate(
        [np.geomspace(eta_tilde, s_max, n_samples), np.linspace(eta_tilde, eta_tilde * (1 + 1e-3), n_samples)]
    )
    H = H_eval(s, pe.eps, pe.p, pe.r, chi, a, k, sensitivity)
    bound = H_upper_bound(s, pe, a, k)
    worst = int(np.argmax(H))
    excess = H - bound
    within = chi <= pe.chi0
    return HCertificate(
        passed=bool(H[worst] <= atol),
        max_H=float(H[worst]),
        worst_s=float(s[worst]),
        bound_holds=bool(np.all(excess <= atol)) if within else False,
        max_bound_excess=float(np.max(excess)),
        n_samples=int(s.size),
        chi=float(chi),
        within_hypothesis=bool(within),
    )


def poincare_constant(lengths):
    """Sharp Neumann-Poincare constant ``(max L_i / pi)**2`` of a box."""
    lengths = [check_positive("length", L) for L in np.atleast_1d(lengths)]
    return (max(lengths) / math.pi) ** 2


def delta1(K5, C_P):
    """``(1/K5) sqrt(1/(2 C_P))``."""
    return math.sqrt(1.0 / (2.0 * check_positive("C_P", C_P))) / check_positive("K5", K5)


def delta_branches(chi0, a, k, n, K1, M0, M, delta1):
    """The three quantities whose minimum is the convergence threshold."""
    check_positive("chi0", chi0)
    check_positive("a", a, strict=False)
    check_positive("K1", K1)
    check_positive("M", M)
    check_positive("M0", M0, strict=False)
    if M0 > M:
        raise DomainError(f"need M >= M0, got M={M}, M0={M0}")
    if a == 0 and M0 == 0:
        raise DomainError("degenerate threshold: a = 0 and M0 = 0")
    return (
        chi0,
        k * (a + K1 * M0) ** (k - 1) * math.sqrt(2.0 / n),
        (a + K1 * M) ** k / M * delta1,
    )


def delta(chi0, a, k, n, K1, M0, M, delta1):
    """``min{chi0, k (a+K1 M0)**(k-1) sqrt(2/n), (a+K1 M)**k / M * delta1}``."""
    return min(delta_branches(chi0, a, k, n, K1, M0, M, delta1))


def mass_factor_infimum(a, k, K1):
    """``inf_{mu > 0} (a + K1 mu)**k / mu``, attained at ``mu = a / (K1 (k-1))``."""
    check_positive("a", a)
    check_positive("K1", K1)
    mu = a / (K1 * (k - 1))
    return (a + K1 * mu) ** k / mu


def delta_mass_independent(chi0, a, k, n, K1, delta1):
    """Threshold for ``a > 0`` that does not depend on the mass or on min v0."""
    check_positive("chi0", chi0)
    return min(chi0, k * a ** (k - 1) * math.sqrt(2.0 / n), mass_factor_infimum(a, k, K1) * delta1)


def _min_mass_factor_tail(M0, a, k, K1):
    """``min_{M >= M0} (a + K1 M)**k / M``."""
    if a > 0:
        M0 = max(M0, a / (K1 * (k - 1)))
    return (a + K1 * M0) ** k / M0


def theorem2_M0(chi0, a, k, n, v_star, c0, K1, delta1, M_lo=1e-8, M_hi=1e12, n_grid=40_001):
    """Smallest mass on a geometric grid above which convergence is guaranteed.

    All three conditions are monotone in ``M0``, so the first grid point
    meeting them is returned.
    """
    check_positive("chi0", chi0)
    cap = k * (a + v_star) ** (k - 1) * math.sqrt(2.0 / n)
    if chi0 >= cap:
        raise HypothesisViolation(f"chi0={chi0:.6g} must be below k(a+v*)^(k-1)sqrt(2/n)={cap:.6g}")
    target = chi0 / delta1
    for M0 in np.geomspace(M_lo, M_hi, n_grid):
        M0 = float(M0)
        if chi_star(a, k, n, eta(c0, M0, v_star)) <= chi0:
            continue
        if k * (a + K1 * M0) ** (k - 1) * math.sqrt(2.0 / n) <= chi0:
            continue
        if _min_mass_factor_tail(M0, a, k, K1) <= target:
            continue
        return M0
    raise SearchExhaustedError(f"no admissible M0 up to {M_hi:.3g}", largest_tried=M_hi)


@dataclass
class TheoryReport:
    eta: float
    chi_star: float
    p: Optional[float]
    eps: Optional[float]
    r: Optional[float]
    margin: Optional[float]
    C_P: float
    delta1: float
    delta: float
    provenance: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        extras = d.pop("extras")
        d.update(extras)
        return d


def theory_report(
    chi0, a, k, n, M, v_star, c0, K1, K5, lengths,
    M0=None, eta_tilde=None, K1_source=EMPIRICAL, K5_source=EMPIRICAL, mass_independent=False,
):
    """Assemble every closed-form quantity for one parameter set.

    ``M0`` defaults to ``M``. ``eta_tilde`` (default: the heat-kernel bound
    from ``c0, M, v_star``) is the signal floor used for ``chi*`` and the
    ``(p, eps)`` search; the bound itself is kept in ``extras["eta_bound"]``.
    """
    eta_bound = eta(c0, M, v_star)
    eta_t = eta_bound if eta_tilde is None else eta_tilde
    cs = chi_star(a, k, n, eta_t)
    C_P = poincare_constant(lengths)
    d1 = delta1(K5, C_P)
    M0 = M if M0 is None else M0
    pe = find_admissible_pe(chi0, a, k, n, eta_t)
    d = delta(chi0, a, k, n, K1, M0, M, d1)
    provenance = {
        "eta": CONFIGURED,
        "chi_star": CONFIGURED,
        "p": CLOSED_FORM,
        "eps": CLOSED_FORM,
        "r": CLOSED_FORM,
        "margin": CLOSED_FORM,
        "C_P": CLOSED_FORM,
        "delta1": K5_source,
        "delta": EMPIRICAL if EMPIRICAL in (K1_source, K5_source) else CONFIGURED,
    }
    d_eta, elasticity = eta_c0_sensitivity(c0, M, v_star)
    extras = {
        "chi0": chi0, "eta_tilde": eta_t, "eta_bound": eta_bound, "c0": c0,
        "eta_bound_dc0": d_eta, "eta_bound_c0_elasticity": elasticity,
        "M": M, "M0": M0, "K1": K1, "K5": K5,
    }
    if mass_independent:
        extras["delta_mass_independent"] = delta_mass_independent(chi0, a, k, n, K1, d1)
        extras["mass_factor_infimum"] = mass_factor_infimum(a, k, K1)
    return TheoryReport(eta_t, cs, pe.p, pe.eps, pe.r, pe.margin, C_P, d1, d, provenance, extras)
