from __future__ import annotations

import json

from plunet.analysis import Reduction


def reduction_json(reduction: Reduction) -> str:
    return json.dumps(
        dict(
            in_channels=reduction.in_channels,
            out_channels=reduction.out_channels,
            aspp=dict(params=reduction.aspp_params, branch_weights=reduction.aspp_branch_weights),
            ps=dict(params=reduction.ps_params, branch_weights=reduction.ps_branch_weights),
            module_ratio=reduction.module_ratio,
            branch_ratio=reduction.branch_ratio,
        ),
        sort_keys=True,
    )
