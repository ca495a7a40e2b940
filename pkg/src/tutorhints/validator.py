"""Acceptance rule over simulated-student repair counts."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

from .domain import RuleVariant

__all__ = ["ContractError", "ValidationOutcome", "decide"]


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class ValidationOutcome:
    n1: int  # passes from the standard prompt
    n2: int  # passes from the explanation-augmented prompt
    n: int
    accepted: bool
    rule_variant: RuleVariant

    def to_json(self) -> dict:
        return {"n1": self.n1, "n2": self.n2, "n": self.n, "accepted": self.accepted,
                "rule_variant": self.rule_variant.value}


def _exact(x: Rational | float | str) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def decide(
    n1: int,
    n2: int,
    n: int,
    alpha: Rational | float | str = Fraction(1, 2),
    beta: Rational | float | str = Fraction(1, 4),
    variant: RuleVariant | str = RuleVariant.FULL,
) -> bool:
    """Accept feedback given ``n1`` standard and ``n2`` augmented passes out of ``n``.

    ``full``: n2/n >= n1/n and (n2/n >= alpha or n2/n >= n1/n + beta).
    ``absolute_only``: n2/n >= alpha.  ``no_beta``: n2/n >= n1/n and n2/n >= alpha.
    ``relative_only``: n2/n >= n1/n.  Arithmetic is exact.
    """
    for name, v in (("n1", n1), ("n2", n2), ("n", n)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ContractError(f"{name} must be an integer, got {v!r}")
    if n < 1 or not 0 <= n1 <= n or not 0 <= n2 <= n:
        raise ContractError(f"need 0 <= n1, n2 <= n and n >= 1; got n1={n1}, n2={n2}, n={n}")
    variant = RuleVariant(variant)
    a, b = _exact(alpha), _exact(beta)
    r1, r2 = Fraction(n1, n), Fraction(n2, n)
    if variant is RuleVariant.FULL:
        return r2 >= r1 and (r2 >= a or r2 >= r1 + b)
    if variant is RuleVariant.ABSOLUTE_ONLY:
        return r2 >= a
    if variant is RuleVariant.NO_BETA:
        return r2 >= r1 and r2 >= a
    return r2 >= r1
