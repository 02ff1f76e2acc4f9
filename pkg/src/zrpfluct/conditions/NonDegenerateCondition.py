import sys
from typing import TYPE_CHECKING, Any, List

from zrpfluct.conditions import CheckContext, ConditionResult, RateCondition

if TYPE_CHECKING:
    from zrpfluct.errors import ConditionViolation
    from zrpfluct.rates import RateFamily


class NonDegenerateCondition(RateCondition):
    id = 'nd'
    shortdesc = 'Rates vanish exactly on empty species'
    description = (
        'g_i(k) = 0 if and only if k_i = 0, and the infimum g_i* of g_i over '
        'occupancies with k_i > 0 is positive'
    )
    severity = 'HIGH'
    tags = ['measure']
    version_added = 'v0.1.0'

    def check(self, family: "RateFamily", ctx: CheckContext) -> ConditionResult:
        n = family.n_species
        g_star = [float("inf")] * n
        violations: List["ConditionViolation"] = []
        for k in ctx.occupancies(n):
            for i, g in enumerate(family.rates(k)):
                if k[i] == 0:
                    if g != 0:
                        violations.append(
                            self.create_violation(
                                f"g_{i} nonzero on an empty species", k, g
                            )
                        )
                    continue
                if not g > 0:
                    violations.append(
                        self.create_violation(f"g_{i} vanishes with k_{i} > 0", k, g)
                    )
                g_star[i] = min(g_star[i], g)
        holds = not violations and all(0 < v < float("inf") for v in g_star)
        return self.result(ctx, holds, value=tuple(g_star), violations=violations)


# testing code to be loaded only with pytest or when executed the condition file
if "pytest" in sys.modules:

    import pytest

    from zrpfluct.rates import (
        ScalarRate,
        independent,
        multi_color,
        tabulate,
        with_entry,
    )

    @pytest.mark.parametrize(
        'condition_runner', (NonDegenerateCondition,), indirect=['condition_runner']
    )
    def test_nd_independent(condition_runner: Any) -> None:
        """Independent walkers have g_i* = 1."""
        result = condition_runner.run(independent(2), cap=10)['nd']
        assert result.holds
        assert result.value == (1.0, 1.0)

    @pytest.mark.parametrize(
        'condition_runner', (NonDegenerateCondition,), indirect=['condition_runner']
    )
    def test_nd_multi_color_lower_bound(condition_runner: Any) -> None:
        """Colored rates g(m) k_i/m are smallest at k_i=1 for large m."""
        result = condition_runner.run(multi_color(2, ScalarRate()), cap=12)['nd']
        assert result.holds
        assert result.value == (1.0, 1.0)

    @pytest.mark.parametrize(
        'condition_runner', (NonDegenerateCondition,), indirect=['condition_runner']
    )
    def test_nd_detects_zero_rate(condition_runner: Any) -> None:
        """A vanishing rate on an occupied species is reported with its k."""
        family = with_entry(tabulate(independent(2), 6), 0, (2, 1), 0.0)
        result = condition_runner.run(family, cap=6)['nd']
        assert not result.holds
        assert [v.k for v in result.violations] == [(2, 1)]
