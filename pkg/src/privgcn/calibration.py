"""Noise calibration for objective perturbation under edge-level (epsilon, delta)-DP.

Quantities are computed strictly in order: derivative suprema, feature
sensitivity, the Erlang tail cutoff ``c_sf``, the raised regularizer, the
parameter-norm bound ``c_theta``, the Jacobian budget ``epsilon_Lambda``,
then the extra quadratic coefficient ``Lambda'`` and the noise rate ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from privgcn.objective import LossSpec, derivative_suprema
from privgcn.propagation import PropagationConfig
from privgcn.sensitivity import sensitivity_bound

LAMBDA_PRIME_ZERO = "lambda_prime_zero"
LAMBDA_PRIME_POSITIVE = "lambda_prime_positive"
NO_NOISE = "no_noise"


class CalibrationError(ArithmeticError):
    """The cascade produced an inadmissible intermediate value."""


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float
    omega: float = 0.9

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (0.0 < self.omega < 1.0):
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")


@dataclass(frozen=True)
class CalibrationResult:
    c1: float
    c2: float
    c3: float
    PsiZ: float
    c_sf: float
    Lambda_in: float
    Lambda_eff: float
    xi: float
    c_theta: float
    epsilon_Lambda: float
    LambdaPrime: float
    beta: float
    branch: str
    epsilon: float
    delta: float
    omega: float
    n1: int
    c: int
    d: int

    @property
    def noisy(self) -> bool:
        return self.branch != NO_NOISE

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationResult":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


def log_erlang_upper_tail(d: int, u: float) -> float:
    """``log(1 - P(d, u))`` for integer shape ``d``.

    Uses the Poisson identity ``1 - P(d, u) = exp(-u) sum_{k<d} u^k / k!``
    summed in log space.
    """
    if u <= 0:
        return 0.0
    k = np.arange(d, dtype=np.float64)
    return float(logsumexp(k * math.log(u) - gammaln(k + 1.0)) - u)


def compute_c_sf(d: int, delta: float, c: int, tol: float = 1e-12) -> float:
    """Smallest ``u > 0`` with ``P(d, u) >= 1 - delta/c`` by bisection."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    d = int(d)
    q = delta / c
    if not (0.0 < q < 1.0):
        raise ValueError(f"delta/c must lie in (0, 1), got {q}")
    target = math.log(q)
    lo = 0.0
    hi = d + 40.0 * math.sqrt(d) + 40.0 * math.log(c / delta)
    while log_erlang_upper_tail(d, hi) > target:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        if hi - lo <= tol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if log_erlang_upper_tail(d, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def _finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise CalibrationError(f"{name} is not finite ({value}); the budget is out of floating-point range")


def calibrate(
    budget: PrivacyBudget,
    loss: LossSpec,
    cfg: PropagationConfig,
    n1: int,
    d: int,
    Lambda_in: float,
    xi: float = 1e-3,
) -> CalibrationResult:
    """Run the calibration cascade for ``n1`` training rows of width ``d``."""
    if n1 < 1 or d < 1:
        raise ValueError("n1 and d must be positive")
    if not Lambda_in > 0:
        raise ValueError(f"Lambda must be positive, got {Lambda_in}")
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    eps, omega, c = budget.epsilon, budget.omega, loss.c
    sup = derivative_suprema(loss)
    c1, c2, c3 = sup.c1, sup.c2, sup.c3
    psi = sensitivity_bound(cfg)
    common = dict(
        c1=c1, c2=c2, c3=c3, PsiZ=psi, Lambda_in=Lambda_in, xi=xi,
        epsilon=eps, delta=budget.delta, omega=omega, n1=int(n1), c=c, d=int(d),
    )

    if psi == 0.0:
        # zero sensitivity: no perturbation needed, keep the caller's regularizer
        return CalibrationResult(
            c_sf=0.0, Lambda_eff=float(Lambda_in), c_theta=0.0, epsilon_Lambda=0.0,
            LambdaPrime=0.0, beta=math.inf, branch=NO_NOISE, **common,
        )

    c_sf = compute_c_sf(d, budget.delta, c)
    Lam = max(Lambda_in, c * c2 * psi * c_sf / (n1 * omega * eps) + xi)
    _finite("Lambda", Lam)
    denom = n1 * omega * eps * Lam - c * c2 * psi * c_sf
    if not (denom > 0 and math.isfinite(denom)):
        raise CalibrationError(f"c_theta denominator is {denom}; regularizer update failed")
    c_theta = (n1 * omega * eps * c1 + c * c1 * psi * c_sf) / denom
    eps_L = c * d * math.log1p((2.0 * c2 + c3 * c_theta) * psi / (d * n1 * Lam))
    if eps_L <= (1.0 - omega) * eps:
        lam_p, branch = 0.0, LAMBDA_PRIME_ZERO
    else:
        lam_p = c * (2.0 * c2 + c3 * c_theta) * psi / (n1 * (1.0 - omega) * eps) - Lam
        branch = LAMBDA_PRIME_POSITIVE
    for name, val in (("c_theta", c_theta), ("epsilon_Lambda", eps_L), ("Lambda'", lam_p)):
        _finite(name, val)
    beta = max(eps - eps_L, omega * eps) / (c * (c1 + c2 * c_theta) * psi)
    if not (beta > 0 and math.isfinite(beta)):
        raise CalibrationError(f"noise rate beta={beta} is not a positive finite number")
    return CalibrationResult(
        c_sf=c_sf, Lambda_eff=Lam, c_theta=c_theta, epsilon_Lambda=eps_L,
        LambdaPrime=lam_p, beta=beta, branch=branch, **common,
    )


def privacy_report(result: CalibrationResult) -> str:
    r = result
    lines = [
        "privacy accounting",
        f"  epsilon          {r.epsilon!r}",
        f"  delta            {r.delta!r}",
        f"  omega            {r.omega!r}",
        f"  branch           {r.branch}",
        f"  n1 c d           {r.n1} {r.c} {r.d}",
        f"  c1 c2 c3         {r.c1!r} {r.c2!r} {r.c3!r}",
        f"  Psi(Z)           {r.PsiZ!r}",
    ]
    if not r.noisy:
        lines += [
            "  sensitivity is zero: no noise added, Lambda' = 0",
            f"  Lambda           {r.Lambda_eff!r}",
        ]
        return "\n".join(lines) + "\n"
    jac = min(r.epsilon_Lambda, r.epsilon - r.omega * r.epsilon)
    dens = max(r.epsilon - r.epsilon_Lambda, r.omega * r.epsilon)
    lines += [
        f"  c_sf             {r.c_sf!r}",
        f"  xi               {r.xi!r}",
        f"  Lambda (input)   {r.Lambda_in!r}",
        f"  Lambda (used)    {r.Lambda_eff!r}",
        f"  c_theta          {r.c_theta!r}",
        f"  epsilon_Lambda   {r.epsilon_Lambda!r}",
        f"  (1-omega)eps     {(1.0 - r.omega) * r.epsilon!r}",
        f"  Lambda'          {r.LambdaPrime!r}",
        f"  beta             {r.beta!r}",
        f"  jacobian term    {jac!r}",
        f"  density term     {dens!r}",
        f"  total exponent   {jac + dens!r}",
    ]
    return "\n".join(lines) + "\n"
