""" Selection and placement of local and global aggregators. """

import logging
from enum import Enum

from .errors import ConfigError
from .model import AggregatorLayout, rank_to_node

logger = logging.getLogger(__name__)


class GlobalPolicy(str, Enum):
    """Placement of the global aggregators over the compute nodes."""
    SPREAD_EVEN = 'spread_even'
    ROUND_ROBIN = 'round_robin'


def select_local_aggregators(q, c):
    '''
    Spread `c` aggregators evenly over `q` processes of one node.

    With e = q mod c, position i is ceil(q/c)*i for i < e and
    ceil(q/c)*e + floor(q/c)*(i - e) for e <= i < c.

    Parameters
    ----------
    q : int
        Processes per node.
    c : int
        Local aggregators per node, 1 <= c <= q.

    Returns
    -------
    ranks : list of int
            c strictly increasing node-local ranks, starting at 0.
    '''
    if c < 1 or c > q:
        raise ConfigError('Cannot select {} aggregators out of {} processes.'.format(c, q),
                          field='local_aggs_per_node')
    e = q % c
    hi = -(-q // c)
    lo = q // c
    return [hi * i if i < e else hi * e + lo * (i - e) for i in range(c)]


def assign_groups(topo, local_aggs):
    '''
    Map every rank to the local aggregator gathering its requests.

    A local aggregator gathers the ranks from its own up to (excluding) the next
    local aggregator on the same node.

    Parameters
    ----------
    topo       : Topology
    local_aggs : iterable of int
                 Global ranks of the local aggregators.

    Returns
    -------
    group_of : tuple of int
               group_of[r] is the local aggregator of rank r.
    '''
    aggs = set(local_aggs)
    group_of = []
    for node in range(topo.num_nodes):
        current = None
        for r in topo.ranks_on_node(node):
            if r in aggs:
                current = r
            if current is None:
                raise ConfigError('Rank {} precedes every local aggregator of node {}.'.format(r, node),
                                  field='local_aggs')
            group_of.append(current)
    return tuple(group_of)


def _spread_even(topo, n_global, local_aggs, node_slot):
    q = topo.procs_per_node
    nsel = min(n_global, topo.num_nodes)
    nodes = select_local_aggregators(topo.num_nodes, nsel)
    needed = [len(range(i, n_global, nsel)) for i in range(nsel)]

    picks = []
    for node, m in zip(nodes, needed):
        on_node = sorted(a for a in local_aggs if rank_to_node(a, topo) == node)
        if m <= len(on_node):
            idx = select_local_aggregators(len(on_node), m)
            picks.append([on_node[(i + node_slot) % len(on_node)] for i in idx])
        else:
            # more global aggregators than local ones on this node
            picks.append([node * q + r for r in select_local_aggregators(q, m)])
    return [picks[j % nsel][j // nsel] for j in range(n_global)]


def _round_robin(topo, n_global):
    q = topo.procs_per_node
    return [(j % topo.num_nodes) * q + j // topo.num_nodes for j in range(n_global)]


def select_global_aggregators(topo, n_global, policy, local_aggs, node_slot=0):
    '''
    Choose the ordered global aggregators.

    Parameters
    ----------
    topo       : Topology
    n_global   : int
                 P_G, usually the stripe count.
    policy     : GlobalPolicy or str
                 SPREAD_EVEN spreads the aggregators over evenly chosen nodes,
                 wrapping onto further local aggregators of those nodes when
                 P_G exceeds the node count. ROUND_ROBIN takes ranks 0, q, 2q, ...,
                 then 1, q+1, ... .
    local_aggs : iterable of int
                 Current local aggregators.
    node_slot  : int, optional
                 Which local aggregator of a selected node is taken first under
                 SPREAD_EVEN (the default 0 is the lowest rank).

    Returns
    -------
    global_aggs : list of int
                  Position g owns the stripes congruent to g mod P_G. Ranks that
                  are not local aggregators must be promoted by the caller.
    '''
    policy = GlobalPolicy(policy)
    if n_global < 1:
        raise ConfigError('At least one global aggregator is required.', field='global_aggs')
    if n_global > topo.nprocs:
        raise ConfigError('{} global aggregators exceed {} processes.'.format(n_global, topo.nprocs),
                          field='global_aggs')
    if policy is GlobalPolicy.ROUND_ROBIN:
        return _round_robin(topo, n_global)
    return _spread_even(topo, n_global, list(local_aggs), node_slot)


def build_layout(topo, aggs_per_node, n_global, policy=GlobalPolicy.SPREAD_EVEN, node_slot=0):
    '''
    Select local aggregators, global aggregators and groups for one operation.

    Parameters
    ----------
    topo          : Topology
    aggs_per_node : int
                    c, local aggregators per node (P_L = c * nodes). c = q gives
                    the two-phase I/O layout.
    n_global      : int
                    P_G.
    policy        : GlobalPolicy or str, optional
    node_slot     : int, optional

    Returns
    -------
    layout : AggregatorLayout
    '''
    q = topo.procs_per_node
    local = [node * q + r for node in range(topo.num_nodes)
             for r in select_local_aggregators(q, aggs_per_node)]
    global_aggs = select_global_aggregators(topo, n_global, policy, local, node_slot=node_slot)
    promoted = sorted(set(global_aggs) - set(local))
    if promoted:
        logger.info('promoting %d ranks to local aggregators for the global policy', len(promoted))
    local = sorted(set(local) | set(promoted))
    return AggregatorLayout(topology=topo,
                            local_aggs=tuple(local),
                            global_aggs=tuple(global_aggs),
                            group_of=assign_groups(topo, local),
                            promoted=tuple(promoted))


def two_phase_layout(topo, n_global, policy=GlobalPolicy.SPREAD_EVEN, node_slot=0):
    """Layout in which every process is its own local aggregator (P_L = P)."""
    return build_layout(topo, topo.procs_per_node, n_global, policy=policy, node_slot=node_slot)
