"""Collapsed marginal PMFs of CRM-Poisson count matrices.

All functions return natural-log probabilities.  A count matrix has one row
per point process (document) and one column per distinct feature; the
probability refers to one specific labelled partition of the points, so a
matrix's columns are unordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from . import crm_core
from .crm_core import ExpMixture, LevySpec, log_abs_h_deriv_series, log_abs_psi_deriv, psi


class InvalidMatrixError(ValueError):
    pass


class SignAnomalyError(ArithmeticError):
    """Derivative signs failed to cancel; indicates a broken derivative."""


@dataclass(frozen=True)
class CountMatrix:
    counts: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.counts, dtype=np.int64)
        if m.ndim == 1:
            m = m[None, :]
        if m.ndim != 2:
            raise InvalidMatrixError("count matrix must be 2-D")
        if np.any(m < 0):
            raise InvalidMatrixError("counts must be nonnegative")
        if m.shape[1] and np.any(m.sum(axis=0) == 0):
            raise InvalidMatrixError("every feature column must have a positive total")
        m.setflags(write=False)
        object.__setattr__(self, "counts", m)

    @classmethod
    def empty(cls, n: int) -> "CountMatrix":
        return cls(np.zeros((n, 0), dtype=np.int64))

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def k(self) -> int:
        return self.counts.shape[1]

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _as_matrix(m) -> CountMatrix:
    if isinstance(m, CountMatrix):
        return m
    arr = np.asarray(m, dtype=np.int64)
    if arr.ndim < 2:
        arr = arr.reshape(1, -1)
    return CountMatrix(arr)


def _check_signs(prefactor_exp: int, orders: np.ndarray, spec: LevySpec, t: float) -> None:
    # runs through psi_deriv so injected derivative faults surface here
    sign = -1 if prefactor_exp % 2 else 1
    for k in np.unique(orders):
        s = crm_core.psi_deriv(spec, int(k), t).sign
        if s < 0 and np.count_nonzero(orders == k) % 2:
            sign = -sign
    if sign != 1:
        raise SignAnomalyError("derivative signs did not cancel the (-1) prefactor")


def crm_poisson_log_pmf(theta: float, spec: LevySpec, n: float, m) -> float:
    """Log CRM-Poisson probability of a count matrix.

    ``spec`` must have unit mass; ``theta`` is the base mass.  ``n`` is the
    evaluation point of the Laplace exponent (the number of point processes,
    or a scaled count for the dish level of a hierarchy).
    """
    if spec.mass != 1.0:
        raise ValueError("crm_poisson_log_pmf expects a unit-mass spec; pass theta separately")
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    m = _as_matrix(m)
    cols = m.col_sums
    k = m.k
    _check_signs(m.total - k, cols, spec, n)
    out = -theta * psi(spec, n) - float(np.sum(gammaln(m.row_sums + 1.0)))
    if k:
        out += k * math.log(theta) + float(np.sum(log_abs_psi_deriv(spec, cols, n)))
    return out


def ccrm_poisson_log_pmf(spec: LevySpec, n: float, k: int, m) -> float:
    """Log CRM-Poisson probability conditioned on ``k`` distinct features.

    Equals :func:`crm_poisson_log_pmf` minus the Poisson(k; theta psi(n))
    log mass; the base mass cancels, so it never enters.
    """
    m = _as_matrix(m)
    if m.k != k:
        raise InvalidMatrixError(f"matrix has {m.k} columns, expected {k}")
    spec = spec.unit()
    cols = m.col_sums
    _check_signs(m.total - k, cols, spec, n)
    out = float(gammaln(k + 1.0)) - float(np.sum(gammaln(m.row_sums + 1.0)))
    if k:
        out += float(np.sum(log_abs_psi_deriv(spec, cols, n))) - k * math.log(psi(spec, n))
    return out


def restaurant_counts_log_pmf(
    base: LevySpec,
    obj: LevySpec,
    m_row: Sequence[int],
    mixture: ExpMixture | None = None,
) -> float:
    """Marginal log probability of one restaurant's table occupancies.

    ``base`` carries its mass; ``obj`` must have unit mass.  The base Laplace
    transform derivative is exact unless a fitted ``mixture`` is supplied.
    """
    if obj.mass != 1.0:
        raise ValueError("object-level spec must have unit mass")
    m_row = np.asarray(m_row, dtype=np.int64)
    if np.any(m_row <= 0):
        raise InvalidMatrixError("tables must hold at least one customer")
    r = int(m_row.size)
    u = psi(obj, 1.0)
    if mixture is None:
        log_h = float(log_abs_h_deriv_series(base, r, u)[r])
    elif r == 0:
        log_h = math.log(mixture(u))
    else:
        log_h = crm_core.h_deriv(base, r, u, mixture).log_mag
    out = log_h - float(gammaln(m_row.sum() + 1.0))
    if r:
        _check_signs(int(m_row.sum()) - r, m_row, obj, 1.0)
        out += float(np.sum(log_abs_psi_deriv(obj, m_row, 1.0)))
    return out


def distinct_count_log_pmf(theta: float, spec: LevySpec, n: float, k: int) -> float:
    """Log Poisson(k; theta * psi(spec, n)) mass of the number of distinct features."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    rate = theta * psi(spec, n)
    if rate == 0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(rate) - rate - math.lgamma(k + 1)


# --------------------------------------------------------------------------
# exact enumeration over labelled partitions


def _set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def enumerate_count_matrices(sizes: Sequence[int]) -> Iterator[np.ndarray]:
    """Count matrix of every partition of labelled points with given row totals.

    Points of row ``i`` are distinct items; each yielded matrix corresponds to
    one set partition, with columns in first-appearance order.
    """
    owner = [i for i, s in enumerate(sizes) for _ in range(s)]
    for part in _set_partitions(list(range(len(owner)))):
        mat = np.zeros((len(sizes), len(part)), dtype=np.int64)
        for j, block in enumerate(part):
            for item in block:
                mat[owner[item], j] += 1
        yield mat


def canonical_columns(mat: np.ndarray) -> tuple[tuple[int, ...], ...]:
    """Order-free key of a count matrix: its sorted column tuples."""
    mat = np.asarray(mat)
    return tuple(sorted(tuple(int(x) for x in col) for col in mat.T))
