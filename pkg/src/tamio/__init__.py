# Do not edit this string manually, always use bumpversion
# Details in CONTRIBUTING.md
__version__ = "0.1.0"

__author__ = "tamio developers"

__license__ = "MIT"
__copyright__ = "Copyright (c) 2026, tamio developers"

from .errors import (ConfigError, OverlapError, StripeDisciplineError, TamError, UnsortedInputError,
                     UnwrittenReadError, WorkloadError)
from .model import (AggregatorLayout, OffsetLength, ProcRequest, RequestList, SimFile, StripeConfig, Topology,
                    rank_to_node, stripe_of)
from .selection import (GlobalPolicy, build_layout, select_global_aggregators, select_local_aggregators,
                        two_phase_layout)
from .requests import coalesce, heap_merge, split_by_domain, validate
from .pipeline import (CollectiveWrite, build_placement_map, inter_node_exchange, intra_node_aggregate, run_tam,
                       run_two_phase)
from .iophase import execute_write, plan_rounds
from .metrics import MetricsReport, check, predict
from .workloads import gen_btio, gen_contiguous1d, gen_s3d, load_decomp
from .config import RunConfig, WorkloadSpec
from .evaluation import Evaluation, compare, run, serial_oracle, sweep
