import sys
from typing import TYPE_CHECKING, Any, List

from zrpfluct.conditions import CheckContext, ConditionResult, RateCondition

if TYPE_CHECKING:
    from zrpfluct.errors import ConditionViolation
    from zrpfluct.rates import RateFamily

RATIO_TOL = 1e-12


class CompatibilityCondition(RateCondition):
    id = 'inv'
    shortdesc = 'Rate ratios are compatible'
    description = (
        'g_i(k)/g_i(k_{j,-}) = g_j(k)/g_j(k_{i,-}) for all i != j and k with '
        'k_i, k_j > 0, so that g!(k) does not depend on the increasing path and '
        'product invariant measures exist'
    )
    severity = 'VERY_HIGH'
    tags = ['measure']
    version_added = 'v0.1.0'

    def check(self, family: "RateFamily", ctx: CheckContext) -> ConditionResult:
        n = family.n_species
        worst = 0.0
        violations: List["ConditionViolation"] = []
        for k in ctx.occupancies(n):
            rates = family.rates(k)
            for i in range(n):
                if k[i] == 0:
                    continue
                down_i = k[:i] + (k[i] - 1,) + k[i + 1 :]
                for j in range(i + 1, n):
                    if k[j] == 0:
                        continue
                    down_j = k[:j] + (k[j] - 1,) + k[j + 1 :]
                    # cross-multiplied ratio identity
                    left = rates[i] * family.rates(down_i)[j]
                    right = rates[j] * family.rates(down_j)[i]
                    scale = max(abs(left), abs(right))
                    if scale == 0:
                        continue
                    deviation = abs(left - right) / scale
                    worst = max(worst, deviation)
                    if deviation > RATIO_TOL:
                        violations.append(
                            self.create_violation(
                                f"species {i} and {j} ratios differ",
                                k,
                                deviation,
                            )
                        )
        return self.result(ctx, not violations, value=worst, violations=violations)


# testing code to be loaded only with pytest or when executed the condition file
if "pytest" in sys.modules:

    import pytest

    from zrpfluct.rates import (
        ScalarRate,
        independent,
        multi_color,
        perturbed_walks,
        tabulate,
        with_entry,
    )

    @pytest.mark.parametrize(
        'condition_runner', (CompatibilityCondition,), indirect=['condition_runner']
    )
    @pytest.mark.parametrize(
        'family',
        (
            pytest.param(independent(3), id='independent'),
            pytest.param(multi_color(2, ScalarRate()), id='multi-color-linear'),
            pytest.param(
                multi_color(2, ScalarRate(kind="power", exponent=2.0)),
                id='multi-color-quadratic',
            ),
            pytest.param(perturbed_walks(3.0, -0.96), id='perturbed-walks'),
        ),
    )
    def test_inv_holds(condition_runner: Any, family: Any) -> None:
        """Shipped families satisfy the ratio identity."""
        result = condition_runner.run(family, cap=12)['inv']
        assert result.holds
        assert result.value <= RATIO_TOL

    @pytest.mark.parametrize(
        'condition_runner', (CompatibilityCondition,), indirect=['condition_runner']
    )
    def test_inv_locates_broken_entry(condition_runner: Any) -> None:
        """Doubling g_0(1,1) breaks the identity at k=(1,1)."""
        table = tabulate(independent(2), 6)
        family = with_entry(table, 0, (1, 1), 2 * table.rates((1, 1))[0])
        result = condition_runner.run(family, cap=6)['inv']
        assert not result.holds
        worst = max(result.violations, key=lambda v: v.magnitude)
        assert worst.k == (1, 1)
        assert worst.magnitude == pytest.approx(0.5)
