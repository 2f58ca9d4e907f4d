from plunet.analysis.compare import Reduction, compare_ps_vs_aspp
from plunet.analysis.cost import (
    CostReport,
    CostRow,
    Tally,
    cost_report,
    count_flops,
    count_params,
    layer_flops,
    layer_params,
)

__all__ = [
    "CostReport",
    "CostRow",
    "Reduction",
    "Tally",
    "compare_ps_vs_aspp",
    "cost_report",
    "count_flops",
    "count_params",
    "layer_flops",
    "layer_params",
]
