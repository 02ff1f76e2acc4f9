import sys
from typing import TYPE_CHECKING, Any

from zrpfluct.conditions import CheckContext, ConditionResult, RateCondition
from zrpfluct.rates import occupancies_upto

if TYPE_CHECKING:
    from zrpfluct.rates import RateFamily

# Scaled inverse gaps above this are reported as a failure to mix.
GAP_CONSTANT_LIMIT = 10.0


class SpectralGapCondition(RateCondition):
    id = 'sg'
    shortdesc = 'Inverse spectral gap grows like l^2'
    description = (
        'W(k, l) = 1/gap of the symmetric canonical process on 2l+1 sites '
        'stays below C l^2 uniformly in the particle numbers k. Checked by '
        'exact eigensolves for small totals and block sizes'
    )
    severity = 'LOW'
    tags = ['mixing', 'opt-in']
    version_added = 'v0.1.0'

    def check(self, family: "RateFamily", ctx: CheckContext) -> ConditionResult:
        # pylint: disable=import-outside-toplevel
        from zrpfluct.kmc import spectral_gap

        worst = 0.0
        for totals in occupancies_upto(family.n_species, ctx.gap_total_cap):
            if not any(totals):
                continue
            for ell in ctx.gap_ells:
                gap = spectral_gap(family, totals, ell)
                scaled = gap.inverse / ell ** 2
                worst = max(worst, scaled)
        holds = worst <= GAP_CONSTANT_LIMIT
        return self.result(ctx, holds, value=worst)


# testing code to be loaded only with pytest or when executed the condition file
if "pytest" in sys.modules:

    import pytest

    from zrpfluct.rates import ScalarRate, multi_color

    @pytest.mark.parametrize(
        'condition_runner', (SpectralGapCondition,), indirect=['condition_runner']
    )
    def test_sg_colored_walkers(condition_runner: Any) -> None:
        """Colored walkers mix like single random walks."""
        family = multi_color(2, ScalarRate())
        result = condition_runner.run(
            family, cap=4, gap_total_cap=2, gap_ells=(1, 2)
        )['sg']
        assert result.holds
        assert 0 < result.value <= GAP_CONSTANT_LIMIT
