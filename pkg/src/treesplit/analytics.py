"""Exact and asymptotic performance math for splitting-tree protocols.

The canonical evaluator for expected interval lengths is the bottom-up
probabilistic recursion (all-positive terms, numerically stable).  The
alternating-binomial closed form is kept as an independent validator: it
suffers catastrophic cancellation as n grows, so it runs compensated
summation with a running error bound and escalates to exact rational
arithmetic when the bound exceeds the requested tolerance.

Length laws, conditioning on the binomial split count i of n colliders
(left group size), with pi_i = C(n,i) p^i q^(n-i):

  bta    L_n = 1 + sum_i pi_i (L_i + L_{n-i})           n >= 2
  mta    as bta, but after an idle left child the right group is a
          definite collision and its root slot is skipped
  sicta  L_n = sum_i pi_i (L_i + L_{n-i})               n >= 2
          (every right root slot is derived by cancellation)
  atic   as sicta for n >= 3, with L_2 = 2 exactly (degree-2 collisions
          resolve in one extra slot via the id-arbitration shortcut)

There is no analytic length law here for the left-broadcast variant
(``atic_left``); its throughput constant is checked by simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional

import numpy as np
from scipy.special import gammaln

_LENGTH_LAWS = ("bta", "mta", "sicta", "atic")
# Unit roundoff of IEEE doubles; the cancellation-error model multiplies
# the running absolute-term mass by a small constant times this.
_ULP = 2.0 ** -53
_ERROR_MODEL_CONSTANT = 8.0


class PrecisionLossError(ArithmeticError):
    """Closed-form evaluation lost more precision than the caller allows."""


@dataclass(frozen=True)
class SplitParams:
    """Splitting probability and the derived constants used by the math.

    ``q = 1 - p`` and ``r = 2 - 4pq - 3(p^2 + q^2)``; r is exactly -1/2
    at p = 1/2.
    """

    p: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"split probability must lie in (0,1), got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def r(self) -> float:
        p, q = self.p, self.q
        return 2.0 - 4.0 * p * q - 3.0 * (p * p + q * q)


def _binom_pmf_row(n: int, log_p: float, log_q: float, gl: np.ndarray) -> np.ndarray:
    """Binomial(n, p) pmf over i=0..n via the log-gamma table ``gl``."""
    i = np.arange(n + 1)
    return np.exp(gl[n + 1] - gl[i + 1] - gl[n - i + 1] + i * log_p + (n - i) * log_q)


class CriLengthTable:
    """Lazily grown table of expected interval lengths L_n for one protocol.

    Building is O(n^2) total up to the largest requested n, so bulk
    consumers (throughput curves, Poisson mixtures) should share one
    table instead of calling the one-shot helpers in a loop.
    """

    def __init__(self, params: SplitParams, protocol: str = "atic"):
        protocol = str(protocol)
        if protocol not in _LENGTH_LAWS:
            raise ValueError(
                f"no analytic length law for {protocol!r}; "
                f"choose one of {_LENGTH_LAWS} or estimate by simulation"
            )
        self.params = params
        self.protocol = protocol
        self._log_p = math.log(params.p)
        self._log_q = math.log(params.q)
        base = [1.0, 1.0]
        if protocol == "atic":
            base.append(2.0)
        self._lengths = base  # grown in place by _extend
        self._gl: np.ndarray = gammaln(np.arange(2))

    def _extend(self, n_max: int) -> None:
        if n_max < len(self._lengths):
            return
        if len(self._gl) < n_max + 2:
            self._gl = gammaln(np.arange(max(n_max + 2, 2 * len(self._gl))))
        L = self._lengths
        arr = np.empty(n_max + 1)
        arr[: len(L)] = L
        gated = self.protocol in ("bta", "mta")
        for n in range(len(L), n_max + 1):
            pmf = _binom_pmf_row(n, self._log_p, self._log_q, self._gl)
            mid = float(np.dot(pmf[1:n], arr[1:n] + arr[n - 1:0:-1]))
            if self.protocol in ("sicta", "atic"):
                # self terms i=0 and i=n contribute pi*(1 + L_n); extract L_n
                num = mid + pmf[0] + pmf[n]
            elif self.protocol == "bta":
                num = 1.0 + mid + pmf[0] + pmf[n]
            else:  # mta: i=0 leaves a definite right group, root slot skipped
                num = 1.0 + mid + pmf[n]
            arr[n] = num / (1.0 - pmf[0] - pmf[n])
        self._lengths = arr.tolist()

    def expected(self, n: int) -> float:
        if n < 0:
            raise ValueError("n must be non-negative")
        self._extend(n)
        return self._lengths[n]

    def throughput(self, n: int) -> float:
        if n < 1:
            raise ValueError("conditional throughput needs n >= 1")
        return n / self.expected(n)

    def lengths_up_to(self, n_max: int) -> np.ndarray:
        self._extend(n_max)
        return np.asarray(self._lengths[: n_max + 1])


def expected_cri_recursive(
    n: int, params: SplitParams, protocol: str = "atic",
    table: Optional[CriLengthTable] = None,
) -> float:
    """Expected interval length via the stable bottom-up recursion.

    One-shot calls rebuild the table from scratch; pass a shared
    :class:`CriLengthTable` when evaluating many n.
    """
    if table is None:
        table = CriLengthTable(params, protocol)
    return table.expected(n)


def conditional_throughput(
    n: int, params: SplitParams, protocol: str = "atic",
    table: Optional[CriLengthTable] = None,
) -> float:
    """T_n = n / L_n, the per-interval efficiency given n initial colliders."""
    if n < 1:
        raise ValueError("conditional throughput needs n >= 1")
    return n / expected_cri_recursive(n, params, protocol, table)


def _closed_sum_float(n: int, p: float) -> tuple[float, float]:
    """Kahan-compensated closed-form sum and its cancellation error bound."""
    q = 1.0 - p
    r = 2.0 - 4.0 * p * q - 3.0 * (p * p + q * q)
    total = 0.0
    comp = 0.0
    abs_mass = 0.0
    sign = 1.0
    for i in range(2, n + 1):
        term = (
            sign
            * math.comb(n, i)
            * (i - 1 + r * i * (i - 1) / 2.0)
            / (1.0 - p ** i - q ** i)
        )
        sign = -sign
        abs_mass += abs(term)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return 1.0 + total, _ERROR_MODEL_CONSTANT * _ULP * abs_mass


def _closed_sum_exact(n: int, p: float) -> float:
    """Closed form in exact rational arithmetic over the binary value of p."""
    pf = Fraction(p)
    qf = 1 - pf
    rf = 2 - 4 * pf * qf - 3 * (pf * pf + qf * qf)
    total = Fraction(0)
    for i in range(2, n + 1):
        total += (
            math.comb(n, i)
            * (-1) ** i
            * (i - 1 + rf * i * (i - 1) / 2)
            / (1 - pf ** i - qf ** i)
        )
    return float(1 + total)


def expected_cri_closed(
    n: int, params: SplitParams, tol: float = 1e-9, allow_exact: bool = True
) -> float:
    """Closed-form expected interval length (full-broadcast law).

    Starts with compensated double-precision summation; when the running
    cancellation bound exceeds ``tol`` (which happens well before n = 30),
    it escalates to exact rational arithmetic, or raises
    :class:`PrecisionLossError` when ``allow_exact`` is False.  Callers
    who need large n should use the recursion instead.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n <= 1:
        return 1.0
    value, err_bound = _closed_sum_float(n, params.p)
    if err_bound <= tol:
        return value
    if not allow_exact:
        raise PrecisionLossError(
            f"closed-form cancellation bound {err_bound:.3e} exceeds tol {tol:.1e} "
            f"at n={n}; use expected_cri_recursive or allow_exact=True"
        )
    return _closed_sum_exact(n, params.p)


def asymptotic_throughput(params: SplitParams) -> float:
    """Limiting throughput of the full-broadcast protocol for a given p.

    Equals (4/3) ln 2 at p = 1/2, where it is also maximized.
    """
    p, q, r = params.p, params.q, params.r
    entropy = -p * math.log(p) - q * math.log(q)
    return entropy / (1.0 + r / 2.0)


def _poisson_truncation(load: float, tol: float) -> int:
    """Smallest cutoff M whose Poisson tail bound P(N >= M) drops below tol.

    Chernoff bound: P(N >= M) <= exp(-load + M + M ln(load / M)) for M > load.
    """
    if load <= 0.0:
        return 0
    m = int(load) + 1
    step = max(int(4.0 * math.sqrt(load)) + 8, 8)
    while True:
        m += step
        log_tail = -load + m + m * math.log(load / m)
        if log_tail < math.log(tol):
            return m


def poisson_expected_cri(
    load: float, params: SplitParams, tol: float = 1e-12,
    protocol: str = "atic", table: Optional[CriLengthTable] = None,
) -> float:
    """Expected interval length when the collider count is Poisson(load)."""
    if load < 0.0:
        raise ValueError("load must be non-negative")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if table is None:
        table = CriLengthTable(params, protocol)
    if load == 0.0:
        return table.expected(0)
    m = _poisson_truncation(load, tol)
    lengths = table.lengths_up_to(m)
    n = np.arange(m + 1)
    log_pmf = n * math.log(load) - load - gammaln(n + 1)
    return float(np.dot(np.exp(log_pmf), lengths))


def windowed_stable_rate(
    load: float, params: SplitParams, tol: float = 1e-12,
    table: Optional[CriLengthTable] = None,
) -> float:
    """Supremum arrival rate (packets/slot) stable at the given window load.

    For window size delta and arrival rate lam, the batch load is
    lam * delta and stability requires the expected interval length to fit
    inside the window; the boundary rate is load / E[L(Poisson(load))].
    The rate climbs towards the full-broadcast asymptote as the load
    grows; a small log-periodic ripple (order 1e-6 after Poisson
    smoothing) survives on top of that trend, so the climb is not
    strictly monotone at fine resolution.
    """
    if load <= 0.0:
        raise ValueError("load must be positive")
    return load / poisson_expected_cri(load, params, tol, table=table)


class WindowedScan(NamedTuple):
    best_load: float
    rate: float


def scan_windowed_mst(grid: Iterable[float], params: SplitParams) -> WindowedScan:
    """Maximize the windowed stable rate over a grid of loads.

    Returns the argmax load and the supremum rate.  The supremum tracks
    the asymptote from below up to the residual ripple of a few 1e-6, so
    window tuning cannot beat unwindowed (gated) operation by more than
    that ripple at any finite window.
    """
    loads = [float(x) for x in grid]
    if not loads:
        raise ValueError("grid must be non-empty")
    if min(loads) <= 0.0:
        raise ValueError("grid loads must be positive")
    table = CriLengthTable(params, "atic")
    best_load, best_rate = loads[0], -math.inf
    for load in loads:
        rate = windowed_stable_rate(load, params, table=table)
        if rate > best_rate:
            best_load, best_rate = load, rate
    return WindowedScan(best_load, best_rate)


class CollisionCountTable:
    """Expected received-collision counts per interval, given n colliders.

    Counts only collision slots actually consumed on the channel (derived
    or skipped collisions cost nothing).  Supported for the cancellation
    protocols where the count feeds memory sizing: sicta and atic.
    """

    def __init__(self, params: SplitParams, protocol: str = "atic"):
        protocol = str(protocol)
        if protocol not in ("sicta", "atic"):
            raise ValueError(f"collision-count law implemented for sicta/atic, got {protocol!r}")
        self.params = params
        self.protocol = protocol
        self._log_p = math.log(params.p)
        self._log_q = math.log(params.q)
        base = [0.0, 0.0]
        if protocol == "atic":
            base.append(1.0)  # a received pair is exactly one collision slot
        self._counts = base
        self._gl: np.ndarray = gammaln(np.arange(2))

    def _extend(self, n_max: int) -> None:
        if n_max < len(self._counts):
            return
        if len(self._gl) < n_max + 2:
            self._gl = gammaln(np.arange(max(n_max + 2, 2 * len(self._gl))))
        arr = np.empty(n_max + 1)
        arr[: len(self._counts)] = self._counts
        for n in range(len(self._counts), n_max + 1):
            pmf = _binom_pmf_row(n, self._log_p, self._log_q, self._gl)
            i = np.arange(1, n)
            right = n - i
            # A derived right group of size m >= 2 saves its root collision.
            derived = arr[right] - (right >= 2)
            mid = float(np.dot(pmf[1:n], arr[1:n] + derived))
            arr[n] = (1.0 - pmf[0] + mid) / (1.0 - pmf[0] - pmf[n])
        self._counts = arr.tolist()

    def expected(self, n: int) -> float:
        if n < 0:
            raise ValueError("n must be non-negative")
        self._extend(n)
        return self._counts[n]


def expected_collisions(
    n: int, params: SplitParams, protocol: str = "atic",
    table: Optional[CollisionCountTable] = None,
) -> float:
    """Expected consumed collision slots in one interval with n colliders."""
    if table is None:
        table = CollisionCountTable(params, protocol)
    return table.expected(n)


def cri_table_rows(n_max: int, params: SplitParams, protocol: str = "atic"):
    """(n, L_n, T_n) rows for n = 1..n_max, suitable for CSV emission."""
    table = CriLengthTable(params, protocol)
    table.lengths_up_to(n_max)
    return [(n, table.expected(n), table.throughput(n)) for n in range(1, n_max + 1)]
