"""Resource allocation mechanisms: allocation rules, payments, and their derivatives.

A mechanism maps a vector of nonnegative scalar signals to resource shares on
the unit simplex and to nonnegative payments.  The built-in mechanisms are
``kelly`` (proportional allocation, pay-your-signal), ``sh`` (the
Sanghavi-Hajek allocation with pay-your-signal), the two-player exponential
mechanisms ``e2pys`` and ``e2sr``, ``shr`` (SH allocation with signal-ratio
payments), and ``mb`` (proportional allocation with the Maheswaran-Basar
integral payment, h(z) = z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SignalDomainError",
    "Mechanism",
    "MechanismConstants",
    "MECHANISM_NAMES",
    "as_signal_vector",
    "get_mechanism",
    "sh_integral",
    "solve_constants",
    "beta_equation",
    "gamma_equation",
]


class SignalDomainError(ValueError):
    """A signal vector (or evaluation point) left the mechanism's domain."""


def as_signal_vector(s: Sequence[float]) -> np.ndarray:
    """Validate and copy a signal vector: length >= 2, finite, nonnegative."""
    arr = np.array(s, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise SignalDomainError("signal vector needs at least two entries")
    if not np.isfinite(arr).all():
        raise SignalDomainError("signals must be finite")
    if (arr < 0).any():
        raise SignalDomainError("signals must be nonnegative")
    return arr


def _with_entry(s: np.ndarray, i: int, y: float) -> np.ndarray:
    out = s.copy()
    out[i] = y
    return out


def _central_difference(f: Callable[[float], float], x: float) -> float:
    # scale-aware step; one-sided second-order formula at the left boundary
    h = max(1e-6 * abs(x), 1e-9)
    if x - h >= 0.0:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    return (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Exact integration of prod_j (1 - r_j t) over [0, 1]
# ---------------------------------------------------------------------------

def _poly_from_ratios(ratios: np.ndarray) -> np.ndarray:
    """Ascending coefficients of prod_j (1 - r_j t) via convolution."""
    coeffs = np.array([1.0])
    for r in ratios:
        coeffs = np.convolve(coeffs, np.array([1.0, -float(r)]))
    return coeffs


def _integrate_poly01(coeffs: np.ndarray, shift: int = 0) -> float:
    """Integral over [0,1] of t**shift * sum_k coeffs[k] t**k."""
    return float(sum(c / (k + shift + 1) for k, c in enumerate(coeffs)))


def sh_integral(ratios: Sequence[float]) -> float:
    """Exact value of the integral of prod_j (1 - r_j t) for t in [0, 1].

    Each ratio must lie in [0, 1]; the empty product integrates to 1.
    """
    arr = np.asarray(ratios, dtype=float)
    if arr.size and ((arr < 0).any() or (arr > 1).any()):
        raise SignalDomainError("ratios must lie in [0, 1]")
    return _integrate_poly01(_poly_from_ratios(arr))


# ---------------------------------------------------------------------------
# Transcendental constants
# ---------------------------------------------------------------------------

def beta_equation(z: float) -> float:
    """Residual of (1/z)(1 - exp(-z/(z-1))) = 1/2."""
    return (1.0 - math.exp(-z / (z - 1.0))) / z - 0.5


def gamma_equation(z: float) -> float:
    """Residual of (1/z)(1 - exp(-z/(2(z-1)))) = 1/2."""
    return (1.0 - math.exp(-z / (2.0 * (z - 1.0)))) / z - 0.5


@dataclass(frozen=True)
class MechanismConstants:
    beta: float
    gamma: float
    phi: float


_BRACKET = (1.0 + 1e-4, 3.0)


def _bisect_root(f: Callable[[float], float], lo: float, hi: float) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise RuntimeError("root bracket does not change sign")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < 1e-13 and hi - lo < 1e-13:
            return mid
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


@lru_cache(maxsize=1)
def solve_constants() -> MechanismConstants:
    """Solve the defining equations of beta and gamma; phi in closed form."""
    lo, hi = _BRACKET
    beta = _bisect_root(beta_equation, lo, hi)
    gamma = _bisect_root(gamma_equation, lo, hi)
    return MechanismConstants(beta=beta, gamma=gamma, phi=(1.0 + math.sqrt(5.0)) / 2.0)


# ---------------------------------------------------------------------------
# Mechanism abstraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mechanism:
    """An anonymous allocation rule paired with a payment rule.

    The raw callables assume at least two strictly positive signals; the
    public methods apply the zero-signal conventions first (all-zero profile
    gets nothing, a unique nonzero signaler gets the whole resource for free).
    ``class_c`` marks mechanisms for which the generating profile of an
    affinized game is guaranteed to maximize each player's utility there.
    """

    name: str
    pys: bool
    class_c: bool
    arity: Optional[int]  # None means any n >= 2
    _alloc: Callable[[np.ndarray], np.ndarray]
    _pay: Callable[[np.ndarray], np.ndarray]
    _alloc_slope: Optional[Callable[[np.ndarray, int], float]] = None
    _pay_slope: Optional[Callable[[np.ndarray, int], float]] = None
    _pay_inverse: Optional[Callable[[float, np.ndarray], float]] = None

    def _checked(self, s: Sequence[float]) -> np.ndarray:
        arr = as_signal_vector(s)
        if self.arity is not None and arr.size != self.arity:
            raise SignalDomainError(
                f"mechanism {self.name!r} is {self.arity}-player only, got n={arr.size}"
            )
        return arr

    def allocate(self, s: Sequence[float]) -> np.ndarray:
        """Resource shares at s; the all-zero profile gets the zero allocation."""
        arr = self._checked(s)
        positive = arr > 0
        if not positive.any():
            return np.zeros_like(arr)
        if positive.sum() == 1:
            out = np.zeros_like(arr)
            out[int(np.argmax(positive))] = 1.0
            return out
        return self._alloc(arr)

    def payments(self, s: Sequence[float]) -> np.ndarray:
        """Payments at s; all zero unless at least two signals are positive."""
        arr = self._checked(s)
        if (arr > 0).sum() < 2:
            return np.zeros_like(arr)
        return self._pay(arr)

    def _check_derivative_point(self, arr: np.ndarray, i: int) -> None:
        if not (i >= 0 and i < arr.size):
            raise IndexError(f"player index {i} out of range")
        if not (np.delete(arr, i) > 0).any():
            raise SignalDomainError(
                "derivative undefined when all opponents signal zero"
            )

    def allocation_derivative(self, s: Sequence[float], i: int) -> float:
        """d g_i(y, s_-i) / dy at y = s_i."""
        arr = self._checked(s)
        self._check_derivative_point(arr, i)
        if self._alloc_slope is not None:
            return float(self._alloc_slope(arr, i))
        return _central_difference(
            lambda y: float(self.allocate(_with_entry(arr, i, y))[i]), float(arr[i])
        )

    def payment_derivative(self, s: Sequence[float], i: int) -> float:
        """d p_i(y, s_-i) / dy at y = s_i."""
        arr = self._checked(s)
        self._check_derivative_point(arr, i)
        if self._pay_slope is not None:
            return float(self._pay_slope(arr, i))
        return _central_difference(
            lambda y: float(self.payments(_with_entry(arr, i, y))[i]), float(arr[i])
        )

    def feasible_signal_inverse(self, budget: float, others: np.ndarray) -> Optional[float]:
        """Closed-form largest own signal with payment <= budget, if registered."""
        if self._pay_inverse is None:
            return None
        return float(self._pay_inverse(budget, others))


# ---------------------------------------------------------------------------
# Built-in mechanisms
# ---------------------------------------------------------------------------

def _pys_pay(s: np.ndarray) -> np.ndarray:
    return s.copy()


def _pys_pay_slope(s: np.ndarray, i: int) -> float:
    return 1.0


def _pys_pay_inverse(budget: float, others: np.ndarray) -> float:
    return budget


def _proportional_alloc(s: np.ndarray) -> np.ndarray:
    return s / s.sum()


def _proportional_alloc_slope(s: np.ndarray, i: int) -> float:
    c = s.sum() - s[i]
    return c / (s[i] + c) ** 2


def _kelly() -> Mechanism:
    return Mechanism(
        name="kelly",
        pys=True,
        class_c=True,
        arity=None,
        _alloc=_proportional_alloc,
        _pay=_pys_pay,
        _alloc_slope=_proportional_alloc_slope,
        _pay_slope=_pys_pay_slope,
        _pay_inverse=_pys_pay_inverse,
    )


def _sh_alloc(s: np.ndarray) -> np.ndarray:
    m = s.max()
    out = np.zeros_like(s)
    for i in range(s.size):
        if s[i] > 0:
            out[i] = (s[i] / m) * sh_integral(np.delete(s, i) / m)
    return out


def _sh_alloc_slope(s: np.ndarray, i: int) -> float:
    others = np.delete(s, i)
    m = others.max()
    y = s[i]
    if y < m:
        # max held by an opponent: g_i is linear in the own signal
        return sh_integral(others / m) / m
    # own signal is the (weak) maximum; differentiate each ratio s_j / y
    total = 0.0
    for k in range(others.size):
        rest = np.delete(others, k) / y
        total += (others[k] / y**2) * _integrate_poly01(_poly_from_ratios(rest), shift=1)
    return float(total)


def _sh() -> Mechanism:
    return Mechanism(
        name="sh",
        pys=True,
        class_c=True,
        arity=None,
        _alloc=_sh_alloc,
        _pay=_pys_pay,
        _alloc_slope=_sh_alloc_slope,
        _pay_slope=_pys_pay_slope,
        _pay_inverse=_pys_pay_inverse,
    )


def _ratio_pay(s: np.ndarray) -> np.ndarray:
    return np.array([s[0] / s[1], s[1] / s[0]])


def _ratio_pay_slope(s: np.ndarray, i: int) -> float:
    return 1.0 / s[1 - i]


def _ratio_pay_inverse(budget: float, others: np.ndarray) -> float:
    return budget * float(others[0])


def _e2pys(beta: float) -> Mechanism:
    k = beta / (beta - 1.0)

    def low_share(r: float) -> float:
        # share of the weakly smaller signal, r = s_i / s_other in [0, 1]
        return (1.0 - math.exp(-k * r)) / beta

    def alloc(s: np.ndarray) -> np.ndarray:
        if s[0] <= s[1]:
            a = low_share(s[0] / s[1])
        else:
            a = 1.0 - low_share(s[1] / s[0])
        return np.array([a, 1.0 - a])

    def alloc_slope(s: np.ndarray, i: int) -> float:
        y, other = s[i], s[1 - i]
        if y <= other:
            return math.exp(-k * y / other) / ((beta - 1.0) * other)
        return other * math.exp(-k * other / y) / ((beta - 1.0) * y * y)

    return Mechanism(
        name="e2pys",
        pys=True,
        class_c=True,
        arity=2,
        _alloc=alloc,
        _pay=_pys_pay,
        _alloc_slope=alloc_slope,
        _pay_slope=_pys_pay_slope,
        _pay_inverse=_pys_pay_inverse,
    )


def _e2sr(gamma: float) -> Mechanism:
    k = gamma / (2.0 * (gamma - 1.0))

    def low_share(r: float) -> float:
        return (1.0 - math.exp(-k * r * r)) / gamma

    def alloc(s: np.ndarray) -> np.ndarray:
        if s[0] <= s[1]:
            a = low_share(s[0] / s[1])
        else:
            a = 1.0 - low_share(s[1] / s[0])
        return np.array([a, 1.0 - a])

    def alloc_slope(s: np.ndarray, i: int) -> float:
        y, other = s[i], s[1 - i]
        if y <= other:
            r = y / other
            return y * math.exp(-k * r * r) / ((gamma - 1.0) * other * other)
        r = other / y
        return other * other * math.exp(-k * r * r) / ((gamma - 1.0) * y**3)

    return Mechanism(
        name="e2sr",
        pys=False,
        class_c=False,  # allocation is not concave near zero
        arity=2,
        _alloc=alloc,
        _pay=_ratio_pay,
        _alloc_slope=alloc_slope,
        _pay_slope=_ratio_pay_slope,
        _pay_inverse=_ratio_pay_inverse,
    )


def _shr() -> Mechanism:
    # SH allocation with the signal-ratio payments of e2sr
    return Mechanism(
        name="shr",
        pys=False,
        class_c=True,
        arity=2,
        _alloc=_sh_alloc,
        _pay=_ratio_pay,
        _alloc_slope=_sh_alloc_slope,
        _pay_slope=_ratio_pay_slope,
        _pay_inverse=_ratio_pay_inverse,
    )


def _mb() -> Mechanism:
    # proportional allocation with payment C * ln((s_i + C)/C), C = sum of others.
    # The payment is concave in the own signal, so mb is not class C by the
    # concave/convex definition, but the affinized utility has derivative
    # C/(y+C) * (lambda/(y+C) - 1) with a single downward crossing at y = s_i,
    # so the generating profile still maximizes utility there.
    def pay(s: np.ndarray) -> np.ndarray:
        out = np.zeros_like(s)
        total = s.sum()
        for i in range(s.size):
            if s[i] > 0:
                c = total - s[i]
                out[i] = c * math.log((s[i] + c) / c)
        return out

    def pay_slope(s: np.ndarray, i: int) -> float:
        c = s.sum() - s[i]
        return c / (s[i] + c)

    def pay_inverse(budget: float, others: np.ndarray) -> float:
        c = float(others.sum())
        return c * math.expm1(budget / c)

    return Mechanism(
        name="mb",
        pys=False,
        class_c=True,
        arity=None,
        _alloc=_proportional_alloc,
        _pay=pay,
        _alloc_slope=_proportional_alloc_slope,
        _pay_slope=pay_slope,
        _pay_inverse=pay_inverse,
    )


MECHANISM_NAMES = ("kelly", "sh", "e2pys", "e2sr", "shr", "mb")


@lru_cache(maxsize=None)
def get_mechanism(name: str) -> Mechanism:
    """Look up a built-in mechanism by name (see MECHANISM_NAMES)."""
    constants = solve_constants()
    builders = {
        "kelly": _kelly,
        "sh": _sh,
        "e2pys": lambda: _e2pys(constants.beta),
        "e2sr": lambda: _e2sr(constants.gamma),
        "shr": _shr,
        "mb": _mb,
    }
    try:
        return builders[name]()
    except KeyError:
        raise KeyError(f"unknown mechanism {name!r}; expected one of {MECHANISM_NAMES}") from None
