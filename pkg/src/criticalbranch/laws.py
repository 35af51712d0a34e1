"""Offspring and immigration rate families for branching with immigration.

An offspring law fixes branching rates ``a_j`` (events per unit time) with
``a_1 < 0`` and ``sum_{j != 1} a_j = -a_1``, so the generating function
``f(s) = sum_j a_j s^j`` vanishes at 1 and the individual lifetime is
exponential with mean ``1/(-a_1)``.  An immigration law fixes arrival rates
``b_k`` with ``b_0 = -sum_{k >= 1} b_k``.

The canonical stable families realize ``f(s) = a0 (1-s)^(1+nu)`` and
``h(s) = -c (1-s)^delta`` exactly; perturbed variants add a second
``(1-s)^power`` term to exercise nonconstant slowly varying factors.  All
fractional binomial coefficients come from the multiplicative recurrence,
never from Gamma-function quotients.

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import karamata

__all__ = [
    "OffspringLaw",
    "ImmigrationLaw",
    "RegimeParams",
    "make_stable_offspring",
    "make_perturbed_offspring",
    "make_finite_offspring",
    "make_stable_immigration",
    "make_finite_immigration",
    "classify",
    "offspring_from_config",
    "immigration_from_config",
]

_SCAN_HORIZON = 10_000
_CLAMP = -1e-14


def _binomial_stream(beta: float, J: int) -> np.ndarray:
    """(-1)^j binom(beta, j) for j = 0..J via the ratio recurrence."""
    out = np.empty(J + 1)
    out[0] = 1.0
    if J >= 1:
        j = np.arange(1.0, J + 1.0)
        out[1:] = np.cumprod((j - 1.0 - beta) / j)
    return out


def _terms_rates(terms: tuple[tuple[float, float], ...], J: int) -> np.ndarray:
    """Series coefficients of sum_m c_m (1-s)^{beta_m} up to order J."""
    out = np.zeros(J + 1)
    for c, beta in terms:
        out += c * _binomial_stream(beta, J)
    return out


@dataclass(frozen=True)
class OffspringLaw:
    """Branching rates a_j and the generating function f(s).

    ``terms`` stores f in the centered form ``sum_m c_m (1-s)^{beta_m}``,
    which evaluates stably arbitrarily close to s = 1.
    """

    kind: str
    terms: tuple[tuple[float, float], ...]
    nu: float | None
    a0: float
    a1: float

    # -- evaluation ---------------------------------------------------------

    def f(self, s: float) -> float:
        return self.f_from_gap(1.0 - s)

    def f_from_gap(self, r):
        """f(1 - r); stable for r near 0."""
        return sum(c * r ** b for c, b in self.terms)

    def fprime(self, s: float) -> float:
        return self.fprime_from_gap(1.0 - s)

    def fprime_from_gap(self, r):
        return -sum(c * b * r ** (b - 1.0) for c, b in self.terms)

    def f_from_gap_coeffs(self, r: np.ndarray) -> np.ndarray:
        """Series coefficients of f(1 - R(s)) given the coefficients of R."""
        from .series import _pow_coeffs

        out = np.zeros_like(r)
        for c, b in self.terms:
            out += c * _pow_coeffs(r, b)
        return out

    def fprime_from_gap_coeffs(self, r: np.ndarray) -> np.ndarray:
        from .series import _pow_coeffs

        out = np.zeros_like(r)
        for c, b in self.terms:
            out -= c * b * _pow_coeffs(r, b - 1.0)
        return out

    # -- coefficients -------------------------------------------------------

    def rates_up_to(self, J: int) -> np.ndarray:
        """Rates a_0..a_J; a_j are the series coefficients of f."""
        return _terms_rates(self.terms, J)

    def f_series(self, N: int):
        from .series import Series

        return Series(self.rates_up_to(N))

    # -- summary quantities -------------------------------------------------

    @property
    def lifetime_mean(self) -> float:
        return 1.0 / (-self.a1)

    @property
    def criticality(self) -> float:
        """f'(1-); zero for critical laws."""
        return self.fprime_from_gap(0.0)

    def slowly_varying(self) -> karamata.SlowlyVarying:
        """The factor L with f(s) = (1-s)^(1+nu) L(1/(1-s)).

        Exact for the stable families; finite laws get the constant limit
        f''(1)/2 (their true factor approaches it at rate 1/x).
        """
        if self.kind == "canonical-stable":
            return karamata.constant(self.terms[0][0])
        if self.kind == "perturbed-stable":
            (c, b1), (c2, b2) = self.terms
            return karamata.power_corrected(c, c2 / c, b2 - b1)
        if self.nu is None:
            raise ValueError("no slowly varying factor for a non-critical law")
        # f''(1)/2: only the quadratic centered term survives at s = 1
        half_second = sum(c for c, b in self.terms if abs(b - 2.0) <= 1e-12)
        return karamata.constant(half_second)


@dataclass(frozen=True)
class ImmigrationLaw:
    """Immigration rates b_k and the generating function h(s) <= 0 on [0,1)."""

    kind: str
    terms: tuple[tuple[float, float], ...]
    delta: float
    c: float
    kappa: float = 0.0

    def h(self, s: float) -> float:
        return self.h_from_gap(1.0 - s)

    def h_from_gap(self, r):
        return sum(c * r ** b for c, b in self.terms)

    def h_from_gap_coeffs(self, r: np.ndarray) -> np.ndarray:
        from .series import _pow_coeffs

        out = np.zeros_like(r)
        for c, b in self.terms:
            out += c * _pow_coeffs(r, b)
        return out

    def rates_up_to(self, K: int) -> np.ndarray:
        """Rates b_0..b_K; b_k are the series coefficients of h."""
        return _terms_rates(self.terms, K)

    def h_series(self, N: int):
        from .series import Series

        return Series(self.rates_up_to(N))

    @property
    def b0(self) -> float:
        return sum(c for c, _ in self.terms)

    @property
    def hprime1(self) -> float:
        """h'(1-); infinite when any tail exponent is below 1."""
        if any(b < 1.0 - 1e-12 for _, b in self.terms):
            return math.inf
        return sum(-c for c, b in self.terms if abs(b - 1.0) <= 1e-12)

    def slowly_varying(self) -> karamata.SlowlyVarying:
        """The factor l with h(s) = -(1-s)^delta l(1/(1-s))."""
        if self.kind == "canonical-stable":
            return karamata.constant(self.c)
        if self.kind == "perturbed-stable":
            return karamata.power_corrected(self.c, self.kappa / self.c, self.delta)
        return karamata.constant(self.hprime1)


@dataclass(frozen=True)
class RegimeParams:
    """Tail indices and the recurrence classification they induce."""

    nu: float
    delta: float
    gamma: float
    mu: float
    beta: float
    classification: str

    @property
    def transient_limit_ok(self) -> bool:
        """Structural precondition of the transient limit law: gamma < 0, mu > 0."""
        return self.gamma < 0.0 and self.mu > 0.0


def _scan_nonnegative(rates: np.ndarray, first_index: int, what: str) -> None:
    bad = np.nonzero(rates[first_index:] < _CLAMP)[0]
    if bad.size:
        k = int(bad[0]) + first_index
        raise ValueError(f"{what} coefficient at index {k} is negative: {rates[k]!r}")


def make_stable_offspring(nu: float, a0: float) -> OffspringLaw:
    """Canonical critical family f(s) = a0 (1-s)^(1+nu)."""
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    if a0 <= 0.0:
        raise ValueError(f"a0 must be positive, got {a0}")
    return OffspringLaw(
        kind="canonical-stable",
        terms=((float(a0), 1.0 + nu),),
        nu=float(nu),
        a0=float(a0),
        a1=-float(a0) * (1.0 + nu),
    )


def make_perturbed_offspring(nu: float, a0: float, rho: float, p: float) -> OffspringLaw:
    """Stable family with a power-corrected factor: f = a0(1-s)^(1+nu)(1 + rho (1-s)^p).

    Coefficient nonnegativity is scanned up to the standard horizon; p <= 1 - nu
    keeps the second term's series nonnegative on its own.
    """
    if not 0.0 < nu <= 1.0 or a0 <= 0.0 or rho < 0.0 or p <= 0.0:
        raise ValueError("need nu in (0,1], a0 > 0, rho >= 0, p > 0")
    terms = ((float(a0), 1.0 + nu), (float(a0) * rho, 1.0 + nu + p))
    rates = _terms_rates(terms, _SCAN_HORIZON)
    _scan_nonnegative(rates, 2, "offspring")
    a1 = -(a0 * (1.0 + nu) + a0 * rho * (1.0 + nu + p))
    return OffspringLaw(kind="perturbed-stable", terms=terms, nu=float(nu), a0=float(a0), a1=a1)


def make_finite_offspring(rates) -> OffspringLaw:
    """Offspring law from an explicit finite rate vector [a_0, a_1, a_2, ...]."""
    a = np.asarray(rates, dtype=float)
    if a.size < 2 or a[0] <= 0.0 or a[1] >= 0.0:
        raise ValueError("need a_0 > 0 and a_1 < 0")
    if np.any(np.delete(a, 1) < 0.0):
        raise ValueError("rates a_j must be nonnegative for j != 1")
    if abs(a.sum()) > 1e-12 * np.abs(a).sum():
        raise ValueError("rates must balance: sum_j a_j = 0")
    terms = []
    for m in range(1, a.size):
        g = (-1.0) ** m * sum(a[j] * math.comb(j, m) for j in range(m, a.size))
        if abs(g) > 1e-15:
            terms.append((g, float(m)))
    critical = abs(a @ np.arange(a.size)) <= 1e-12 * np.abs(a).sum()
    return OffspringLaw(
        kind="finite",
        terms=tuple(terms),
        nu=1.0 if critical else None,
        a0=float(a[0]),
        a1=float(a[1]),
    )


def make_stable_immigration(delta: float, c: float, kappa: float = 0.0) -> ImmigrationLaw:
    """Stable immigration h(s) = -c(1-s)^delta - kappa(1-s)^(2 delta).

    A positive kappa is accepted only if every series coefficient b_k stays
    nonnegative over the scan horizon (values above -1e-14 clamp to zero).
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if c <= 0.0:
        raise ValueError(f"c must be positive, got {c}")
    if kappa < 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if kappa == 0.0:
        terms = ((-float(c), float(delta)),)
        kind = "canonical-stable"
    else:
        terms = ((-float(c), float(delta)), (-float(kappa), 2.0 * float(delta)))
        kind = "perturbed-stable"
    rates = _terms_rates(terms, _SCAN_HORIZON)
    _scan_nonnegative(rates, 1, "immigration")
    return ImmigrationLaw(kind=kind, terms=terms, delta=float(delta), c=float(c), kappa=float(kappa))


def make_finite_immigration(rates) -> ImmigrationLaw:
    """Immigration law from an explicit finite rate vector [b_0, b_1, ...]."""
    b = np.asarray(rates, dtype=float)
    if b.size < 2 or b[0] >= 0.0 or np.any(b[1:] < 0.0):
        raise ValueError("need b_0 < 0 and b_k >= 0 for k >= 1")
    if abs(b.sum()) > 1e-12 * np.abs(b).sum():
        raise ValueError("rates must balance: b_0 = -sum_k b_k")
    terms = []
    for m in range(1, b.size):
        g = (-1.0) ** m * sum(b[j] * math.comb(j, m) for j in range(m, b.size))
        if abs(g) > 1e-15:
            terms.append((g, float(m)))
    return ImmigrationLaw(
        kind="finite", terms=tuple(terms), delta=1.0, c=float(-b[0]), kappa=0.0
    )


def classify(f_law: OffspringLaw, h_law: ImmigrationLaw) -> RegimeParams:
    """Regime parameters from the two tail indices; a pure function."""
    if f_law.nu is None:
        raise ValueError("offspring law is not critical; no regime classification")
    nu, delta = f_law.nu, h_law.delta
    gamma = delta - nu
    mu = 2.0 * delta - nu
    if gamma > 0.0:
        cls = "positive-recurrent"
    elif gamma < 0.0:
        cls = "transient"
    else:
        cls = "q-process"
    return RegimeParams(
        nu=nu, delta=delta, gamma=gamma, mu=mu, beta=min(delta, abs(gamma)), classification=cls
    )


def offspring_from_config(cfg: dict) -> OffspringLaw:
    kind = cfg.get("kind")
    if kind == "canonical":
        return make_stable_offspring(cfg["nu"], cfg["a0"])
    if kind == "perturbed":
        return make_perturbed_offspring(cfg["nu"], cfg["a0"], cfg["rho"], cfg["p"])
    if kind == "finite":
        return make_finite_offspring(cfg["rates"])
    raise ValueError(f"unknown offspring kind {kind!r}")


def immigration_from_config(cfg: dict) -> ImmigrationLaw:
    kind = cfg.get("kind")
    if kind == "canonical":
        return make_stable_immigration(cfg["delta"], cfg["c"])
    if kind == "perturbed":
        return make_stable_immigration(cfg["delta"], cfg["c"], cfg["kappa"])
    if kind == "finite":
        return make_finite_immigration(cfg["rates"])
    raise ValueError(f"unknown immigration kind {kind!r}")
