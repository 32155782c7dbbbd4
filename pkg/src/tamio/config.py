""" Run configuration schema: a JSON document mirroring the command-line flags. """

import json
import logging
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .model import StripeConfig, Topology

logger = logging.getLogger(__name__)


class WorkloadSpec(BaseModel):
    """Which request pattern to generate and its parameters."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: Literal['contiguous1d', 'btio', 's3d', 'decomp_file'] = 'contiguous1d'
    n: int = Field(16, ge=1, description='grid edge of btio and s3d')
    block_bytes: int = Field(1024, ge=1, description='bytes per process of contiguous1d')
    nvars: int = Field(40, ge=1, description='btio variables')
    process_grid: Optional[Tuple[int, int, int]] = None
    variables: Optional[List[Tuple[str, int]]] = None
    path: Optional[str] = None


class RunConfig(BaseModel):
    '''
    One simulator run.

    P_L is local_aggs_per_node * nodes; P_G defaults to the stripe count.
    '''
    model_config = ConfigDict(extra='forbid', frozen=True)

    workload: WorkloadSpec = WorkloadSpec()
    procs: int = Field(8, ge=1)
    nodes: int = Field(2, ge=1)
    local_aggs_per_node: int = Field(1, ge=1)
    global_aggs: Optional[int] = Field(None, ge=1)
    stripe_size: int = Field(1024, ge=1)
    stripe_count: int = Field(4, ge=1)
    global_policy: Literal['spread_even', 'round_robin'] = 'spread_even'
    node_slot: int = Field(0, ge=0)
    overlap_policy: Literal['strict', 'last_writer'] = 'strict'
    method: Literal['tam', 'two_phase', 'both'] = 'both'
    seed: int = Field(0, ge=0)
    stripes_per_round: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    round_order: Literal['ascending', 'descending'] = 'ascending'
    verify: bool = True
    out: Optional[str] = None
    csv: Optional[str] = None
    trace: Optional[str] = None
    dump: Optional[str] = None

    @model_validator(mode='after')
    def _check_topology(self):
        if self.procs % self.nodes:
            raise ValueError('nodes: {} processes cannot be placed uniformly on {} nodes'.format(
                self.procs, self.nodes))
        if self.local_aggs_per_node > self.procs // self.nodes:
            raise ValueError('local_aggs_per_node: {} exceeds the {} processes per node'.format(
                self.local_aggs_per_node, self.procs // self.nodes))
        if self.n_global > self.procs:
            raise ValueError('global_aggs: {} exceeds the {} processes'.format(self.n_global, self.procs))
        return self

    @property
    def q(self):
        return self.procs // self.nodes

    @property
    def n_global(self):
        return self.global_aggs if self.global_aggs is not None else self.stripe_count

    @property
    def n_local(self):
        return self.local_aggs_per_node * self.nodes

    def topology(self):
        return Topology(self.nodes, self.q)

    def stripe_config(self):
        return StripeConfig(self.stripe_size, self.stripe_count)

    def replace(self, **changes):
        """Validated copy with some fields changed."""
        return parse_config({**self.model_dump(), **changes})


def _field_of(error):
    loc = '.'.join(str(p) for p in error.get('loc', ()))
    msg = error.get('msg', '')
    if not loc and ': ' in msg:
        # model-level checks name their field at the start of the message
        loc = msg.split(': ', 1)[0].split()[-1]
    return loc or None


def parse_config(doc):
    '''
    Validate a configuration mapping.

    Raises
    ------
    ConfigError
        Naming the first offending field.
    '''
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first.get('msg', str(exc)), field=_field_of(first)) from exc


def load_config(path=None, **overrides):
    '''
    Read a JSON config file and apply overrides on top of it.

    Parameters
    ----------
    path      : str, optional
                JSON document with RunConfig fields.
    overrides : dict
                Fields to set; None values are ignored. Workload fields are
                given as a nested 'workload' mapping and merged key by key.

    Returns
    -------
    config : RunConfig
    '''
    doc = {}
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except (OSError, ValueError) as exc:
            raise ConfigError('cannot read {}: {}'.format(path, exc), field='config')
        if not isinstance(doc, dict):
            raise ConfigError('the config file must hold a JSON object', field='config')
    workload = dict(doc.get('workload') or {})
    workload.update({k: v for k, v in (overrides.pop('workload', None) or {}).items() if v is not None})
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if workload:
        doc['workload'] = workload
    config = parse_config(doc)
    logger.debug('config: %s', config.model_dump_json())
    return config
