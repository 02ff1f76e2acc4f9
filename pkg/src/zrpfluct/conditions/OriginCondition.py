import math
import sys
from typing import TYPE_CHECKING, Any, List

from zrpfluct.conditions import CheckContext, ConditionResult, RateCondition
from zrpfluct.rates import log_g_factorial, occupancies

if TYPE_CHECKING:
    from zrpfluct.rates import RateFamily


class OriginCondition(RateCondition):
    id = 'ori'
    shortdesc = 'Partition function is finite near the origin'
    description = (
        'phi_* = liminf g!(k)^(1/|k|) is positive. Only the running minimum '
        'over each shell |k| = m can be computed; the last shell value is the '
        'estimate and a steadily decreasing sequence is reported as a warning'
    )
    severity = 'HIGH'
    tags = ['measure']
    version_added = 'v0.1.0'

    def check(self, family: "RateFamily", ctx: CheckContext) -> ConditionResult:
        minima: List[float] = []
        for total in range(1, ctx.cap + 1):
            lowest = min(
                log_g_factorial(family, k) / total
                for k in occupancies(family.n_species, total)
            )
            minima.append(math.exp(lowest))
        estimate = minima[-1]
        warnings = []
        tail = minima[len(minima) // 2 :]
        if len(tail) > 2 and all(b < a for a, b in zip(tail, tail[1:])):
            warnings.append(
                f"shell minima of g!(k)^(1/|k|) decrease up to the cap "
                f"(last {estimate:.4g}); phi_* may be smaller"
            )
        return self.result(
            ctx, estimate > 0, value=estimate, warnings=warnings
        )


# testing code to be loaded only with pytest or when executed the condition file
if "pytest" in sys.modules:

    import pytest

    from zrpfluct.rates import ScalarRate, independent, multi_color

    @pytest.mark.parametrize(
        'condition_runner', (OriginCondition,), indirect=['condition_runner']
    )
    def test_ori_grows_for_walkers(condition_runner: Any) -> None:
        """For g_i(k)=k_i the shell minima increase with the shell."""
        result = condition_runner.run(independent(2), cap=20)['ori']
        assert result.holds
        assert not result.warnings

    @pytest.mark.parametrize(
        'condition_runner', (OriginCondition,), indirect=['condition_runner']
    )
    def test_ori_constant_rate(condition_runner: Any) -> None:
        """A constant single-species rate gives phi_* equal to that constant."""
        family = multi_color(1, ScalarRate(kind="power", exponent=0.0, scale=0.5))
        result = condition_runner.run(family, cap=15)['ori']
        assert result.value == pytest.approx(0.5)
