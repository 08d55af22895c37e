"""Monte Carlo oracle for the fourth-chaos projection coefficients.

In the high-frequency limit the whitened Hessian ``(Y_3, Y_4, Y_5)`` can be
rewritten through a Gaussian vector ``Z`` with covariance

    [[3, 0, 1],
     [0, 1, 0],
     [1, 0, 3]]

via ``Z_1 = sqrt(3) Y_3``, ``Z_2 = Y_4`` and
``Z_3 = sqrt(8/3) Y_5 + Y_3 / sqrt(3)``. Then ``det(hess) / lambda^2``
tends to ``D / 8`` with ``D = Z_1 Z_3 - Z_2^2``. Also, ``-f`` equals
``T = (Z_1 + Z_3) / sqrt(8)``, and ``Y_5`` equals
``W = (3 Z_3 - Z_1) / sqrt(24)``.

Conditioning on ``T = t`` is explicit: ``Z_1 = sqrt(2) t + e`` and
``Z_3 = sqrt(2) t - e`` with ``e, Z_2`` iid standard normal. Hence
``D = 2 t^2 - e^2 - Z_2^2`` and ``W = (t - sqrt(2) e) / sqrt(3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .intervals import Interval
from .special_functions import DomainError, hermite

C_TILDE = np.array([[3.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 3.0]])
C_TILDE_CHOL = np.linalg.cholesky(C_TILDE)
_CHUNK = 1_000_000

#: lambda * phi_0 * phi_j for the gradient delta, j = 4, 2, 0
COUNT_CONSTANTS = {"k2": 3.0 / math.pi, "h25": -1.0 / math.pi, "k5": 1.0 / math.pi}
#: phi(0)^2 * He_j(0) for a unit-scale gradient delta
EPC_CONSTANTS = {"k2": 3.0 / (2.0 * math.pi), "h25": -1.0 / (2.0 * math.pi), "k5": 1.0 / (2.0 * math.pi)}
_HERMITE_OF_W = {"k2": 0, "h25": 2, "k5": 4}


@dataclass(frozen=True)
class ZVector:
    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray

    @property
    def det(self) -> np.ndarray:
        """``Z_1 Z_3 - Z_2^2`` (eight times the limiting Hessian determinant)."""
        return self.z1 * self.z3 - self.z2 ** 2

    @property
    def level(self) -> np.ndarray:
        """``T = (Z_1 + Z_3)/sqrt 8``, minus the field value."""
        return (self.z1 + self.z3) / math.sqrt(8.0)

    @property
    def w(self) -> np.ndarray:
        """``(3 Z_3 - Z_1)/sqrt 24``, the whitened ``Y_5``."""
        return (3.0 * self.z3 - self.z1) / math.sqrt(24.0)

    def negated(self) -> "ZVector":
        return ZVector(-self.z1, -self.z2, -self.z3)


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def sample_z(seed, n: int = 1) -> ZVector:
    """Draw ``n`` copies of ``Z`` through the lower Cholesky factor of its covariance."""
    g = _rng(seed).standard_normal((3, n))
    z = C_TILDE_CHOL @ g
    return ZVector(z[0], z[1], z[2])


def z_from_y(y3, y4, y5) -> ZVector:
    """Change of variables from independent ``(Y_3, Y_4, Y_5)``."""
    y3, y4, y5 = (np.asarray(a, dtype=float) for a in (y3, y4, y5))
    return ZVector(math.sqrt(3.0) * y3, y4, math.sqrt(8.0 / 3.0) * y5 + y3 / math.sqrt(3.0))


class _Accumulator:
    """Streaming mean and standard error over chunks (order-independent up to rounding)."""

    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, x: np.ndarray):
        self.n += x.size
        self.s1 += math.fsum(x)
        self.s2 += math.fsum(x * x)

    def result(self) -> tuple[float, float]:
        mean = self.s1 / self.n
        var = max(self.s2 / self.n - mean * mean, 0.0) * self.n / max(self.n - 1, 1)
        return mean, math.sqrt(var / self.n)


def _chunks(n: int):
    left = n
    while left > 0:
        k = min(_CHUNK, left)
        yield k
        left -= k


def conditional_density_mc(r: int, t: float, n: int = 1_000_000, seed=0) -> tuple[float, float]:
    """Estimate ``p_r(t)`` from the conditional law of ``Z`` given ``T = t``.

    ``p_r(t) = phi(t) E[(t - sqrt2 e)^r |2t^2 - e^2 - Z_2^2|]`` where
    ``phi`` is the standard normal density; the factor ``phi(t)`` is
    ``sqrt 8`` times the density of ``Z_1 + Z_3`` at ``sqrt 8 t``.
    """
    if r not in (0, 2, 4):
        raise DomainError("r must be 0, 2 or 4")
    if n < 10_000:
        raise DomainError("conditional_density_mc needs n >= 1e4")
    rng = _rng([seed, r, int(np.float64(t).view(np.uint64))])
    acc = _Accumulator()
    for k in _chunks(n):
        e, z2 = rng.standard_normal((2, k))
        acc.add((t - math.sqrt(2.0) * e) ** r * np.abs(2.0 * t * t - e * e - z2 * z2))
    mean, se = acc.result()
    scale = math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    return mean * scale, se * scale


def _coefficient_terms(which: str, z: ZVector) -> np.ndarray:
    q = _HERMITE_OF_W[which]
    return hermite(q, z.w) if q else np.ones_like(z.z1)


def projection_coefficient_mc(which: str, interval: Interval, n: int = 1_000_000, seed=0) -> tuple[float, float]:
    """Estimate a count coefficient ``k2``, ``k5`` or ``h25`` on ``interval``.

    ``coef = c * E[|D|/8 * 1{T in I} * g(W)]`` with ``g = 1, He_4, He_2``
    and ``c = lambda phi_0 phi_j`` (``3/pi``, ``1/pi``, ``-1/pi``).
    Antithetic pairs ``Z, -Z`` are averaged; all three integrands are even.
    """
    if which not in COUNT_CONSTANTS:
        raise DomainError(f"unknown coefficient {which!r}")
    if n < 100_000:
        raise DomainError("projection_coefficient_mc needs n >= 1e5")
    const = COUNT_CONSTANTS[which]
    rng = _rng([seed, 1, list(COUNT_CONSTANTS).index(which)])
    acc = _Accumulator()
    for k in _chunks(n // 2):
        g = C_TILDE_CHOL @ rng.standard_normal((3, k))
        z = ZVector(g[0], g[1], g[2])
        vals = []
        for zz in (z, z.negated()):
            vals.append(np.abs(zz.det) / 8.0 * interval.contains(zz.level) * _coefficient_terms(which, zz))
        acc.add(const * 0.5 * (vals[0] + vals[1]))
    return acc.result()


def epc_coefficient_mc(
    which: str, u: float, n: int = 1_000_000, seed=0, event: str = "excursion"
) -> tuple[float, float]:
    """Estimate an EPC coefficient with the signed determinant.

    ``event="excursion"`` uses ``{f >= u}``, that is ``{T <= -u}``, which is
    the event defining the excursion set. ``event="display"`` uses
    ``{T <= u}`` and gives the negated values.
    """
    if which not in EPC_CONSTANTS:
        raise DomainError(f"unknown coefficient {which!r}")
    if event not in ("excursion", "display"):
        raise DomainError("event must be 'excursion' or 'display'")
    if n < 100_000:
        raise DomainError("epc_coefficient_mc needs n >= 1e5")
    const = EPC_CONSTANTS[which]
    cut = -u if event == "excursion" else u
    rng = _rng([seed, 2, list(EPC_CONSTANTS).index(which), int(np.float64(u).view(np.uint64))])
    acc = _Accumulator()
    for k in _chunks(n):
        g = C_TILDE_CHOL @ rng.standard_normal((3, k))
        z = ZVector(g[0], g[1], g[2])
        acc.add(const * z.det / 8.0 * (z.level <= cut) * _coefficient_terms(which, z))
    return acc.result()


def phi_table(i: int, mu1: float) -> float:
    """Limit of ``E[He_i(Y) delta_eps(mu_1 Y)]`` as the mollifier shrinks."""
    if mu1 <= 0:
        raise DomainError("mu1 must be positive")
    base = 1.0 / (math.sqrt(2.0 * math.pi) * mu1)
    table = {0: base, 1: 0.0, 2: -base, 4: 3.0 * base}
    if i not in table:
        raise DomainError(f"phi_table is defined for i in {{0, 1, 2, 4}}, got {i}")
    return table[i]


#: Hermite indices on (Y_1, ..., Y_5) for coefficients that must vanish
PARITY_FAMILIES = {
    "g12": (1, 1, 0, 0, 0),
    "g12_h3": (3, 1, 0, 0, 0),
    "p345": (0, 0, 1, 1, 1),
    "q2345": (0, 1, 1, 1, 1),
    "g34": (0, 0, 1, 1, 0),
    "g43": (0, 0, 0, 3, 1),
}
#: a coefficient that is far from zero, used as a power check
PARITY_CONTROL = ("k2", (0, 4, 0, 0, 0))


def _mollified_coefficient(indices, interval, n, rng, eps):
    """``lambda E[|D|/8 1{T in I} delta_eps(grad f) prod He_a(Y_a)]`` by Monte Carlo.

    ``(Y_1, Y_2)`` are drawn uniformly from the mollifier's support
    ``[-eps/2, eps/2]^2`` in whitened units and reweighted by
    ``2 phi(y_1) phi(y_2)``, which absorbs ``lambda / mu_1^2 = 2``.
    """
    acc = _Accumulator()
    for k in _chunks(n):
        y12 = rng.uniform(-0.5 * eps, 0.5 * eps, (2, k))
        y345 = rng.standard_normal((3, k))
        y = np.vstack([y12, y345])
        z = z_from_y(y[2], y[3], y[4])
        weight = 2.0 * np.exp(-0.5 * (y[0] ** 2 + y[1] ** 2)) / (2.0 * math.pi)
        vals = np.abs(z.det) / 8.0 * interval.contains(z.level) * weight
        for a, idx in enumerate(indices):
            if idx:
                vals = vals * hermite(idx, y[a])
        acc.add(vals)
    return acc.result()


def parity_zero_check(
    families=None, n: int = 1_000_000, seed=0, interval: Interval | None = None, eps: float = 0.2
) -> dict:
    """z-scores for coefficients that vanish by parity, plus a nonzero control.

    Returns ``{"z": {family: z}, "worst": max |z|, "control_z": z}``.
    """
    if n < 100_000:
        raise DomainError("parity_zero_check needs n >= 1e5")
    interval = interval or Interval(-math.inf, 1.0)
    families = list(PARITY_FAMILIES) if families is None else list(families)
    zs = {}
    for j, name in enumerate(families):
        if name not in PARITY_FAMILIES:
            raise DomainError(f"unknown parity family {name!r}")
        est, se = _mollified_coefficient(PARITY_FAMILIES[name], interval, n, _rng([seed, 3, j]), eps)
        zs[name] = est / se
    est, se = _mollified_coefficient(PARITY_CONTROL[1], interval, n, _rng([seed, 4]), eps)
    return {"z": zs, "worst": max(abs(v) for v in zs.values()), "control_z": est / se, "control_estimate": est}
