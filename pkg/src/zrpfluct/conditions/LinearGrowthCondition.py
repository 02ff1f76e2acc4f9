import sys
from typing import TYPE_CHECKING, Any

from zrpfluct.conditions import CheckContext, ConditionResult, RateCondition

if TYPE_CHECKING:
    from zrpfluct.rates import RateFamily


class LinearGrowthCondition(RateCondition):
    id = 'lg'
    shortdesc = 'Rates have bounded increments'
    description = (
        'max over i, j and k of |g_i(k_{j,+}) - g_i(k)| is finite; within a '
        'finite range this is reported as the largest increment seen, with a '
        'warning when increments keep growing towards the cap'
    )
    severity = 'MEDIUM'
    tags = ['growth']
    version_added = 'v0.1.0'

    def check(self, family: "RateFamily", ctx: CheckContext) -> ConditionResult:
        n = family.n_species
        half = ctx.cap // 2
        worst = 0.0
        worst_low = 0.0
        worst_k: Any = None
        for k in ctx.occupancies(n, ctx.cap - 1):
            here = family.rates(k)
            for j in range(n):
                up = k[:j] + (k[j] + 1,) + k[j + 1 :]
                there = family.rates(up)
                step = max(abs(a - b) for a, b in zip(there, here))
                if step > worst:
                    worst, worst_k = step, k
                if sum(k) < half:
                    worst_low = max(worst_low, step)
        warnings = []
        if worst_low > 0 and worst > 2 * worst_low:
            warnings.append(
                f"increments grow from {worst_low:.3g} to {worst:.3g} at k={worst_k}; "
                "linear growth may fail beyond the cap"
            )
        return self.result(ctx, True, value=worst, warnings=warnings)


# testing code to be loaded only with pytest or when executed the condition file
if "pytest" in sys.modules:

    import pytest

    from zrpfluct.rates import ScalarRate, independent, multi_color

    @pytest.mark.parametrize(
        'condition_runner', (LinearGrowthCondition,), indirect=['condition_runner']
    )
    def test_lg_independent(condition_runner: Any) -> None:
        """Independent walkers have unit increments."""
        result = condition_runner.run(independent(2), cap=10)['lg']
        assert result.holds
        assert result.value == pytest.approx(1.0)
        assert not result.warnings

    @pytest.mark.parametrize(
        'condition_runner', (LinearGrowthCondition,), indirect=['condition_runner']
    )
    def test_lg_quadratic_rate_warns(condition_runner: Any) -> None:
        """Quadratic colored rates have increments growing with |k|."""
        family = multi_color(2, ScalarRate(kind="power", exponent=2.0))
        result = condition_runner.run(family, cap=12)['lg']
        assert result.warnings
