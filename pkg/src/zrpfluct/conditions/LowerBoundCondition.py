import sys
from typing import TYPE_CHECKING, Any, List

from zrpfluct.conditions import CheckContext, ConditionResult, RateCondition

if TYPE_CHECKING:
    from zrpfluct.errors import ConditionViolation
    from zrpfluct.rates import RateFamily


class LowerBoundCondition(RateCondition):
    id = 'lb'
    shortdesc = 'Rates grow by at least eps0 over the shift m0'
    description = (
        'g_i(m + m0) - g_i(m) >= eps0 for every species i and occupancy m, '
        'which gives full fugacity and density domains and the l^2 spectral '
        'gap bound of the canonical process'
    )
    severity = 'MEDIUM'
    tags = ['growth', 'mixing']
    version_added = 'v0.1.0'

    def check(self, family: "RateFamily", ctx: CheckContext) -> ConditionResult:
        n = family.n_species
        m0 = ctx.m0 or (1,) * n
        reach = ctx.cap - sum(m0)
        violations: List["ConditionViolation"] = []
        margin = float("inf")
        if reach < 0:
            return self.result(
                ctx, False, value=None, warnings=[f"cap {ctx.cap} below |m0|"]
            )
        for m in ctx.occupancies(n, reach):
            shifted = tuple(a + b for a, b in zip(m, m0))
            increments = [
                a - b for a, b in zip(family.rates(shifted), family.rates(m))
            ]
            low = min(increments)
            margin = min(margin, low - ctx.eps0)
            if low < ctx.eps0:
                violations.append(
                    self.create_violation(
                        f"increment {low:.4g} below eps0={ctx.eps0:g}", m, low
                    )
                )
        return self.result(ctx, not violations, value=margin, violations=violations)


# testing code to be loaded only with pytest or when executed the condition file
if "pytest" in sys.modules:

    import pytest

    from zrpfluct.rates import ScalarRate, independent, multi_color

    @pytest.mark.parametrize(
        'condition_runner', (LowerBoundCondition,), indirect=['condition_runner']
    )
    def test_lb_independent(condition_runner: Any) -> None:
        """Walkers gain exactly one unit of rate per added particle."""
        result = condition_runner.run(
            independent(2), cap=30, m0=(1, 1), eps0=0.5
        )['lb']
        assert result.holds
        assert result.value == pytest.approx(0.5)

    @pytest.mark.parametrize(
        'condition_runner', (LowerBoundCondition,), indirect=['condition_runner']
    )
    def test_lb_constant_rate_fails(condition_runner: Any) -> None:
        """Bounded rates cannot satisfy the lower bound."""
        family = multi_color(1, ScalarRate(kind="power", exponent=0.0))
        result = condition_runner.run(family, cap=10, m0=(1,), eps0=0.1)['lb']
        assert not result.holds
