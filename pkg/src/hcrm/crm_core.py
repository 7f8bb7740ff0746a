"""Laplace exponents of homogeneous CRMs and their derivatives.

Every supported Levy intensity is a nonnegative combination of
exponentially tilted power laws

    rho(dz) = mass * sum_q c_q / Gamma(1 - d_q) * exp(-z) * z**(-1 - d_q) dz

so the Laplace exponent and all of its derivatives have closed forms.  The
gamma process is the ``d = 0`` member.  Derivatives alternate in sign and
overflow quickly, so they are returned as :class:`SignedLogValue`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls
from scipy.special import gammaln


# fault-injection switches used by the verification harness's self-test
FAULTS: set[str] = set()


def logsumexp(a, axis=None):
    """Plain numpy log-sum-exp; scipy's version carries heavy per-call overhead."""
    a = np.asarray(a, dtype=float)
    mx = np.max(a, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - mx), axis=axis, keepdims=True)) + mx
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


class DomainError(ValueError):
    """Argument outside the domain of a Laplace exponent or its derivatives."""


class FitError(RuntimeError):
    """Exponential-mixture fit failed or was not available."""


# --------------------------------------------------------------------------
# signed log arithmetic


@dataclass(frozen=True)
class SignedLogValue:
    """A real number stored as ``sign * exp(log_mag)``."""

    sign: int
    log_mag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if (self.sign == 0) != (self.log_mag == -math.inf):
            raise ValueError("sign == 0 iff log_mag == -inf")

    @classmethod
    def from_float(cls, x: float) -> "SignedLogValue":
        if x == 0:
            return cls(0, -math.inf)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log_mag > 709.78:
            return self.sign * math.inf
        return self.sign * math.exp(self.log_mag)

    def __mul__(self, other: "SignedLogValue") -> "SignedLogValue":
        s = self.sign * other.sign
        if s == 0:
            return ZERO
        return SignedLogValue(s, self.log_mag + other.log_mag)

    def __truediv__(self, other: "SignedLogValue") -> "SignedLogValue":
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero SignedLogValue")
        if self.sign == 0:
            return ZERO
        return SignedLogValue(self.sign * other.sign, self.log_mag - other.log_mag)

    def __neg__(self) -> "SignedLogValue":
        return SignedLogValue(-self.sign, self.log_mag)

    def __add__(self, other: "SignedLogValue") -> "SignedLogValue":
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        hi, lo = (self, other) if self.log_mag >= other.log_mag else (other, self)
        diff = lo.log_mag - hi.log_mag
        if hi.sign == lo.sign:
            return SignedLogValue(hi.sign, hi.log_mag + math.log1p(math.exp(diff)))
        if diff == 0.0:
            return ZERO
        return SignedLogValue(hi.sign, hi.log_mag + math.log1p(-math.exp(diff)))


ZERO = SignedLogValue(0, -math.inf)


# --------------------------------------------------------------------------
# Levy intensity families


@dataclass(frozen=True)
class Gamma:
    pass


@dataclass(frozen=True)
class GeneralizedGamma:
    d: float

    def __post_init__(self):
        if not 0.0 <= self.d < 1.0:
            raise DomainError(f"discount d must lie in [0, 1), got {self.d}")


@dataclass(frozen=True)
class SumGeneralizedGamma:
    components: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.components:
            raise DomainError("SGGP needs at least one component")
        for theta_q, d_q in self.components:
            if not theta_q > 0:
                raise DomainError(f"component mass must be positive, got {theta_q}")
            if not 0.0 <= d_q < 1.0:
                raise DomainError(f"component discount must lie in [0, 1), got {d_q}")


Family = Gamma | GeneralizedGamma | SumGeneralizedGamma


@dataclass(frozen=True)
class LevySpec:
    """Levy intensity family plus total base mass.

    For SGGP the component masses live inside the family and ``mass`` is 1.
    """

    family: Family
    mass: float = 1.0
    _comp: tuple[tuple[float, float], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        fam = self.family
        if isinstance(fam, Gamma):
            comp = ((1.0, 0.0),)
        elif isinstance(fam, GeneralizedGamma):
            comp = ((1.0, float(fam.d)),)
        elif isinstance(fam, SumGeneralizedGamma):
            comp = tuple((float(t), float(d)) for t, d in fam.components)
        else:
            raise TypeError(f"unknown Levy family {fam!r}")
        object.__setattr__(self, "_comp", comp)

    @classmethod
    def gamma(cls, mass: float = 1.0) -> "LevySpec":
        return cls(Gamma(), mass)

    @classmethod
    def ggp(cls, d: float, mass: float = 1.0) -> "LevySpec":
        return cls(GeneralizedGamma(d), mass)

    @classmethod
    def sggp(cls, components: Sequence[tuple[float, float]]) -> "LevySpec":
        return cls(SumGeneralizedGamma(tuple((float(t), float(d)) for t, d in components)), 1.0)

    @property
    def components(self) -> tuple[tuple[float, float], ...]:
        """``(c_q, d_q)`` pairs; the Laplace exponent is ``mass * sum_q c_q * phi_{d_q}``."""
        return self._comp

    @property
    def is_gamma_type(self) -> bool:
        """True when every component has zero discount (pure gamma process)."""
        return all(d == 0.0 for _, d in self._comp)

    @property
    def total_weight(self) -> float:
        """``mass * sum_q c_q``, i.e. ``psi'(0)`` and the expected total mass."""
        return self.mass * sum(c for c, _ in self._comp)

    def with_mass(self, mass: float) -> "LevySpec":
        return LevySpec(self.family, mass)

    def with_component_mass(self, q: int, theta_q: float) -> "LevySpec":
        if not isinstance(self.family, SumGeneralizedGamma):
            raise TypeError("component masses exist only for SGGP")
        comps = list(self.family.components)
        comps[q] = (float(theta_q), comps[q][1])
        return LevySpec.sggp(comps)

    def unit(self) -> "LevySpec":
        """Same family with ``mass = 1``."""
        return self.with_mass(1.0)


# --------------------------------------------------------------------------
# Laplace exponent


def _phi(d: float, t: float) -> float:
    lt = math.log1p(t)
    if d == 0.0:
        return lt
    return math.expm1(d * lt) / d


def psi(spec: LevySpec, t: float) -> float:
    """Laplace exponent ``int (1 - exp(-t z)) rho(dz)``, mass included."""
    if t < 0 or math.isnan(t):
        raise DomainError(f"psi needs t >= 0, got {t}")
    return spec.mass * sum(c * _phi(d, t) for c, d in spec.components)


def log_abs_psi_deriv(spec: LevySpec, k, t: float):
    """``log|psi^(k)(t)|`` for scalar or array ``k >= 1``.

    The sign of ``psi^(k)`` is always ``(-1)**(k-1)``.
    """
    lt = math.log1p(t)
    if np.ndim(k) == 0:
        kf = float(k)
        vals = [math.log(c) + math.lgamma(kf - d) - math.lgamma(1.0 - d) + (d - kf) * lt
                for c, d in spec.components]
        mx = max(vals)
        s = vals[0] if len(vals) == 1 else mx + math.log(sum(math.exp(v - mx) for v in vals))
        return math.log(spec.mass) + s
    k = np.asarray(k, dtype=float)
    terms = [
        math.log(c) + gammaln(k - d) - gammaln(1.0 - d) + (d - k) * lt
        for c, d in spec.components
    ]
    if len(terms) == 1:
        out = terms[0]
    else:
        out = logsumexp(np.stack(np.broadcast_arrays(*terms)), axis=0)
    out = math.log(spec.mass) + out
    return float(out) if np.ndim(out) == 0 else out


def psi_deriv(spec: LevySpec, k: int, t: float) -> SignedLogValue:
    """k-th derivative of :func:`psi` at ``t``."""
    if k < 1 or int(k) != k:
        raise DomainError(f"derivative order must be a positive integer, got {k}")
    if t < 0 or math.isnan(t):
        raise DomainError(f"psi_deriv needs t >= 0, got {t}")
    sign = 1 if k % 2 == 1 else -1
    if "psi_sign_flip" in FAULTS:
        sign = -sign
    return SignedLogValue(sign, log_abs_psi_deriv(spec, int(k), t))


# --------------------------------------------------------------------------
# Laplace transform of the base total mass


def h_eval(base: LevySpec, u: float) -> float:
    """``E exp(-u Phi(S)) = exp(-psi(base, u))``."""
    if u < 0 or math.isnan(u):
        raise DomainError(f"h needs u >= 0, got {u}")
    return math.exp(-psi(base, u))


def log_abs_h_deriv_series(base: LevySpec, kmax: int, u: float) -> np.ndarray:
    """``log|h^(k)(u)|`` for ``k = 0..kmax`` via the Faa di Bruno recursion.

    With ``a_j = |psi^(j)(u)|`` and ``H_k = |h^(k)(u)|``,
    ``H_{k+1} = sum_{j=0}^{k} C(k, j) a_{j+1} H_{k-j}``; every term has the
    same sign, so the recursion is stable in log space.  For gamma-type bases
    the closed form is used.
    """
    if u < 0:
        raise DomainError(f"h needs u >= 0, got {u}")
    ks = np.arange(kmax + 1, dtype=float)
    if base.is_gamma_type:
        a = base.total_weight
        return gammaln(ks + a) - gammaln(a) - (ks + a) * math.log1p(u)
    log_a = np.full(kmax + 1, -np.inf)
    if kmax >= 1:
        log_a[1:] = log_abs_psi_deriv(base, np.arange(1, kmax + 1), u)
    out = np.empty(kmax + 1)
    out[0] = -psi(base, u)
    log_fact = gammaln(np.arange(kmax + 1) + 1.0)
    for k in range(kmax):
        # term j: C(k, j) a_{j+1} H_{k-j}
        v = log_fact[k] - log_fact[: k + 1] - log_fact[k::-1] + log_a[1 : k + 2] + out[k::-1]
        mx = v.max()
        out[k + 1] = mx + math.log(np.exp(v - mx).sum())
    return out


@dataclass(frozen=True)
class ExpMixture:
    """``sum_r w_r exp(-lambda_r u)`` approximating ``h``."""

    weights: tuple[float, ...]
    rates: tuple[float, ...]
    max_rel_residual: float = 0.0
    u_max: float = math.inf

    def __call__(self, u: float) -> float:
        w = np.asarray(self.weights)
        lam = np.asarray(self.rates)
        return float(np.sum(w * np.exp(-lam * u)))

    def log_abs_deriv(self, k: int, u: float) -> float:
        w = np.asarray(self.weights)
        lam = np.asarray(self.rates)
        keep = w > 0
        return float(logsumexp(np.log(w[keep]) + k * np.log(lam[keep]) - lam[keep] * u))


def fit_exp_mixture(
    base: LevySpec,
    num_terms: int = 40,
    u_grid: Sequence[float] | None = None,
    tol: float = 1e-6,
    rate_range: tuple[float, float] = (1e-2, 1e3),
) -> ExpMixture:
    """Nonnegative least-squares fit of an exponential mixture to ``h``.

    Rates are fixed and log-spaced over ``rate_range``; the weights are fitted
    in relative error and then rescaled so the mixture equals 1 at ``u = 0``.
    """
    if num_terms < 1:
        raise ValueError("num_terms must be positive")
    if u_grid is None:
        u_grid = np.concatenate([[0.0], np.logspace(-3, math.log10(20.0), 199)])
    u = np.asarray(u_grid, dtype=float)
    if np.any(u < 0) or np.any(np.diff(u) < 0):
        raise ValueError("u_grid must be sorted and nonnegative")
    if np.unique(u).size < 2:
        raise FitError("degenerate grid: need at least two distinct points")
    h = np.exp(-np.array([psi(base, x) for x in u]))
    lam = np.logspace(math.log10(rate_range[0]), math.log10(rate_range[1]), num_terms)
    basis = np.exp(-np.outer(u, lam))
    w, _ = nnls(basis / h[:, None], np.ones_like(u), maxiter=50 * num_terms)
    if w.sum() <= 0:
        raise FitError("NNLS returned all-zero weights")
    w = w / (np.exp(-lam * 0.0) @ w)
    resid = float(np.max(np.abs(basis @ w / h - 1.0)))
    if resid > tol:
        raise FitError(f"exp-mixture residual {resid:.3g} exceeds tolerance {tol:.3g}")
    return ExpMixture(tuple(w.tolist()), tuple(lam.tolist()), resid, float(u[-1]))


def h_deriv(base: LevySpec, k: int, u: float, mixture: ExpMixture | None = None) -> SignedLogValue:
    """k-th derivative of :func:`h_eval`.

    Gamma-type bases use the closed form.  Other bases need a fitted
    :class:`ExpMixture`.
    """
    if k < 1 or int(k) != k:
        raise DomainError(f"derivative order must be a positive integer, got {k}")
    if u < 0 or math.isnan(u):
        raise DomainError(f"h_deriv needs u >= 0, got {u}")
    sign = -1 if k % 2 else 1
    if base.is_gamma_type:
        a = base.total_weight
        return SignedLogValue(sign, float(gammaln(k + a) - gammaln(a) - (k + a) * math.log1p(u)))
    if mixture is None:
        raise FitError("non-gamma base requires fit_exp_mixture before h_deriv")
    return SignedLogValue(sign, mixture.log_abs_deriv(int(k), u))


def h_deriv_series(base: LevySpec, k: int, u: float) -> SignedLogValue:
    """k-th derivative of ``h`` through the exact recursion (no mixture fit)."""
    if k < 1 or int(k) != k:
        raise DomainError(f"derivative order must be a positive integer, got {k}")
    sign = -1 if k % 2 else 1
    return SignedLogValue(sign, float(log_abs_h_deriv_series(base, int(k), u)[k]))
