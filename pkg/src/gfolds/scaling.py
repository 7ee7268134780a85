"""Loss scaling laws for unique and repeated pretraining data.

Unique-data law:      L(N, D) = E + A / N^alpha + B / D^beta
Repeated-data law:    same form over effective counts N-hat, D-hat, where
effective data/parameters saturate exponentially in the repetition count
with decay constants R*_D and R*_N.

Power terms are evaluated in log space, so counts up to 1e15 and beyond
never overflow an intermediate.  Everything here is a pure function of
64-bit floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class UniqueLawParams:
    E: float
    A: float
    B: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.A <= 0 or self.B <= 0:
            raise DomainError("coefficients A and B must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError("exponents alpha and beta must be positive")


@dataclass(frozen=True)
class RepeatedLawParams(UniqueLawParams):
    r_star_d: float = 1.0
    r_star_n: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.r_star_d <= 0 or self.r_star_n <= 0:
            raise DomainError("decay constants R*_D and R*_N must be positive")


# Published fits: the unique-data constants and the repeated-data constants.
UNIQUE_LAW = UniqueLawParams(E=1.69, A=406.4, B=410.7, alpha=0.34, beta=0.28)
REPEATED_LAW = RepeatedLawParams(E=1.88, A=523.22, B=1480.30, alpha=0.35, beta=0.35,
                                 r_star_d=15.39, r_star_n=5.31)

PRESETS = {"unique": UNIQUE_LAW, "repeated": REPEATED_LAW}


def _require_positive(**values):
    for name, value in values.items():
        if not (value > 0):
            raise DomainError(f"{name} must be positive, got {value}")


def _power_term(coeff: float, base: float, exponent: float) -> float:
    return math.exp(math.log(coeff) - exponent * math.log(base))


def loss_unique(n_params: float, n_tokens: float, p: UniqueLawParams = UNIQUE_LAW) -> float:
    """Predicted final loss for a model of `n_params` trained on `n_tokens` once."""
    _require_positive(N=n_params, D=n_tokens)
    return p.E + _power_term(p.A, n_params, p.alpha) + _power_term(p.B, n_tokens, p.beta)


def effective_data(unique_tokens: float, repetitions: float,
                   p: RepeatedLawParams = REPEATED_LAW) -> float:
    """Effective token count after `repetitions` epochs over `unique_tokens`.

    Exactly linear in `unique_tokens` (the repetition factor is computed
    first), monotone in `repetitions`, and bounded by U_D * (1 + R*_D).
    """
    _require_positive(U_D=unique_tokens)
    if repetitions < 0:
        raise DomainError(f"repetitions must be non-negative, got {repetitions}")
    factor = 1.0 + p.r_star_d * (1.0 - math.exp(-repetitions / p.r_star_d))
    return unique_tokens * factor


def _frontier_constants(p: UniqueLawParams) -> tuple[float, float, float]:
    """G, a, b for the compute-optimal frontier N_opt = G * (C/6)^a."""
    g = (p.alpha * p.A / (p.beta * p.B)) ** (1.0 / (p.alpha + p.beta))
    a = p.beta / (p.alpha + p.beta)
    b = p.alpha / (p.alpha + p.beta)
    return g, a, b


def compute_optimal(flops: float, p: UniqueLawParams = UNIQUE_LAW) -> tuple[float, float]:
    """Loss-minimizing (N, D) on the budget surface FLOPs = 6*N*D.

    Closed form: substituting D = C/(6N) into the law and zeroing the
    derivative gives N_opt = G * (C/6)^a with G = (alpha*A / (beta*B))^(1/(alpha+beta)),
    a = beta/(alpha+beta); D_opt then follows from the constraint.
    """
    _require_positive(C=flops)
    g, a, _ = _frontier_constants(p)
    n_opt = g * (flops / 6.0) ** a
    d_opt = flops / (6.0 * n_opt)
    return n_opt, d_opt


def n_opt_for_data(n_tokens: float, p: UniqueLawParams = UNIQUE_LAW) -> float:
    """Compute-optimal parameter count for a token budget (frontier inversion)."""
    _require_positive(D=n_tokens)
    g, a, b = _frontier_constants(p)
    return g * (n_tokens * g) ** (a / b)


def d_opt_for_params(n_params: float, p: UniqueLawParams = UNIQUE_LAW) -> float:
    """Compute-optimal token count for a parameter budget (frontier inversion)."""
    _require_positive(N=n_params)
    g, a, b = _frontier_constants(p)
    return (n_params / g) ** (b / a) / g


def parameterization_branch(n_params: float, unique_tokens: float,
                            p: RepeatedLawParams = REPEATED_LAW,
                            rel_tol: float = 1e-9) -> str:
    """'under', 'well', or 'over' relative to N_opt(U_D)."""
    n_opt = n_opt_for_data(unique_tokens, p)
    if math.isclose(n_params, n_opt, rel_tol=rel_tol):
        return "well"
    return "under" if n_params < n_opt else "over"


def repeated_law_terms(n_params: float, unique_tokens: float, repetitions: float,
                       p: RepeatedLawParams = REPEATED_LAW) -> dict:
    """All intermediate quantities of the repeated-data law, plus the loss."""
    _require_positive(N=n_params, U_D=unique_tokens)
    d_hat = effective_data(unique_tokens, repetitions, p)
    n_opt = n_opt_for_data(unique_tokens, p)
    u_n = min(n_params, n_opt)
    r_n = n_params / u_n - 1.0
    n_hat = u_n + u_n * p.r_star_n * (1.0 - math.exp(-r_n / p.r_star_n))
    loss = p.E + _power_term(p.A, n_hat, p.alpha) + _power_term(p.B, d_hat, p.beta)
    return {
        "d_hat": d_hat,
        "n_opt": n_opt,
        "u_n": u_n,
        "r_n": r_n,
        "n_hat": n_hat,
        "branch": parameterization_branch(n_params, unique_tokens, p),
        "loss": loss,
    }


def loss_repeated(n_params: float, unique_tokens: float, repetitions: float,
                  p: RepeatedLawParams = REPEATED_LAW) -> float:
    """Predicted final loss after `repetitions` epochs over `unique_tokens`."""
    return repeated_law_terms(n_params, unique_tokens, repetitions, p)["loss"]


def bernoulli_gap(x: float) -> float:
    """x - (1 - e^-x); non-negative everywhere, zero only at x = 0.

    This is the quantity whose sign rules out the over/well-parameterized
    branches in the half-data consistency argument.
    """
    return x - (1.0 - math.exp(-x))


def appendix_f_audit(n_params: float, unique_tokens: float,
                     p: RepeatedLawParams = REPEATED_LAW,
                     repetitions: float = 4.0) -> dict:
    """Numeric form of the half-data case analysis.

    Evaluates the repeated-data law at U_D and U_D/2, reports the
    effective-data ratio, the parameterization branch of each run, and
    which branch is consistent with the two losses being (roughly) equal.
    """
    full = repeated_law_terms(n_params, unique_tokens, repetitions, p)
    half = repeated_law_terms(n_params, unique_tokens / 2.0, repetitions, p)
    if full["branch"] == "under" and half["branch"] == "under":
        conclusion = "underparameterized at both runs"
    elif full["branch"] == "under" or half["branch"] == "under":
        conclusion = "underparameterized at one run only"
    else:
        conclusion = "well- or over-parameterized at both runs"
    return {
        "n": n_params,
        "u_d": unique_tokens,
        "repetitions": repetitions,
        "full": full,
        "half": half,
        "d_hat_ratio": full["d_hat"] / half["d_hat"],
        "bernoulli_gap_half": bernoulli_gap(half["r_n"] / p.r_star_n),
        "loss_gap": full["loss"] - half["loss"],
        "conclusion": conclusion,
    }
