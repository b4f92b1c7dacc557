"""Search strategies over design points: brute force, simulated annealing and
a deterministic rule-based optimiser.

All three start from (or are bounded by) the resource-minimal state and
minimise the chosen objective; throughput runs minimise the negated
images/s. Results always carry the best feasible point seen together with a
best-so-far trajectory.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .backends import RESOURCE_COMPONENTS, ResourceVector, node_cycles, \
    node_latency, node_resources
from .evaluation import Platform, design_space_size, objective_value, \
    partition_bandwidth, partition_latency, partition_resources, validate_design
from .hdgraph import CutSet, DesignPoint, HDGraph, Partition, \
    PropagationError, folding_domains, propagate_matching, resource_minimal_init

DEFAULT_BRUTE_FORCE_CAP = 10_000_000
DEFAULT_TIME_BUDGET_S = 60.0

_FOLD_VARS = ("s_in", "s_out", "k")


class OptimiserError(RuntimeError):
    pass


class SpaceTooLargeError(OptimiserError):
    """The design space exceeds the brute-force enumeration cap."""


class NoFeasibleDesignError(OptimiserError):
    """No point in the design space satisfies the constraints."""


class InfeasibleInitialError(OptimiserError):
    """Even the resource-minimal design violates the platform constraints."""


@dataclass(frozen=True)
class AnnealingConfig:
    """Annealing hyper-parameters.

    The temperature starts at k_start and is scaled by cooling_rate each
    iteration until it drops below k_min; the search then continues at k_min
    for min_temp_iterations steps (deterministic) and/or until time_budget_s
    of wall time has elapsed. When neither is given, a 60 s wall budget is
    used. Wall-clock budgets make run length machine-dependent; use
    min_temp_iterations where reproducible output matters.
    """

    k_start: float = 1000.0
    k_min: float = 1.0
    cooling_rate: float = 0.98
    seed: int = 0
    time_budget_s: float | None = None
    min_temp_iterations: int | None = None

    def __post_init__(self):
        if not 0 < self.k_min <= self.k_start:
            raise ValueError("temperatures must satisfy 0 < k_min <= k_start")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")
        if self.time_budget_s is not None and self.time_budget_s < 0:
            raise ValueError("time_budget_s must be non-negative")
        if self.min_temp_iterations is not None and self.min_temp_iterations < 0:
            raise ValueError("min_temp_iterations must be non-negative")


@dataclass
class OptimiserResult:
    best_point: DesignPoint
    best_objective: float
    trajectory: list[tuple[int, float]]
    wall_time_s: float
    evaluations: int


def cooling_schedule(config: AnnealingConfig) -> list[float]:
    """Temperatures of the cooling phase: k_start, then scaled by the cooling
    rate each step, while strictly above k_min."""
    temps = []
    k = config.k_start
    while k > config.k_min:
        temps.append(k)
        k *= config.cooling_rate
    return temps


def annealing_decision(obj_prev: float, obj_new: float,
                       temperature: float) -> float:
    """Acceptance probability: 1 for improvements, exp-decaying otherwise."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return math.exp(min(0.0, (obj_prev - obj_new) / temperature))


def random_transform(point: DesignPoint, rng: random.Random) -> DesignPoint | None:
    """One primitive mutation: set one folding variable to a uniformly drawn
    domain value, or toggle one cut edge; the matching equalities are then
    re-propagated. Returns None when the propagation is infeasible and the
    transform must be rejected."""
    graph = point.graph
    n = len(graph)
    n_fold_sites = 3 * n
    site = rng.randrange(n_fold_sites + n - 1)
    if site < n_fold_sites:
        index, var_i = divmod(site, 3)
        var = _FOLD_VARS[var_i]
        domain = folding_domains(graph.nodes[index], graph.backend)[var_i]
        value = domain[rng.randrange(len(domain))]
        candidate = point.with_folding(index, var, value)
        try:
            return propagate_matching(candidate, index, var)
        except PropagationError:
            return None
    edge = site - n_fold_sites + 1  # cut edges are 1-based
    removed = edge in point.cutset.cuts
    candidate = point.with_cut_toggled(edge)
    if removed and graph.backend.enforce_inter_matching:
        # the joined edge must stream again; repair rightward from its producer
        try:
            return propagate_matching(candidate, edge - 1, "s_out")
        except PropagationError:
            return None
    return candidate


def simulated_annealing(graph: HDGraph, platform: Platform,
                        objective: str = "latency", batch: int = 1,
                        config: AnnealingConfig | None = None) -> OptimiserResult:
    """Annealing search from the resource-minimal state.

    Candidates that violate any constraint are always reverted; feasible
    candidates are rejected when the acceptance probability falls below a
    uniform draw. The returned point is the best feasible one seen, not the
    final one.
    """
    if config is None:
        config = AnnealingConfig()
    start = time.perf_counter()
    point = resource_minimal_init(graph)
    violations = validate_design(point, platform)
    if violations:
        raise InfeasibleInitialError(
            "resource-minimal design is infeasible: " + "; ".join(violations))
    rng = random.Random(config.seed)
    current_obj = objective_value(point, platform, objective, batch)
    evaluations = 1
    best_point = point.copy()
    best_obj = current_obj
    trajectory = [(0, best_obj)]
    iteration = 0

    def step(temperature: float):
        nonlocal point, current_obj, best_point, best_obj, evaluations, iteration
        iteration += 1
        candidate = random_transform(point, rng)
        if candidate is not None:
            evaluations += 1
            if not validate_design(candidate, platform):
                cand_obj = objective_value(candidate, platform, objective, batch)
                if not annealing_decision(current_obj, cand_obj, temperature) < rng.random():
                    point = candidate
                    current_obj = cand_obj
                    if cand_obj < best_obj:
                        best_point = candidate.copy()
                        best_obj = cand_obj
        trajectory.append((iteration, best_obj))

    for temperature in cooling_schedule(config):
        step(temperature)

    extra, budget = config.min_temp_iterations, config.time_budget_s
    if extra is None and budget is None:
        budget = DEFAULT_TIME_BUDGET_S
    if extra is not None:
        for _ in range(extra):
            step(config.k_min)
    if budget is not None:
        while time.perf_counter() - start < budget:
            step(config.k_min)

    return OptimiserResult(
        best_point=best_point,
        best_objective=best_obj,
        trajectory=trajectory,
        wall_time_s=time.perf_counter() - start,
        evaluations=evaluations,
    )


def _resource_scalar(delta: ResourceVector, platform: Platform) -> float:
    """Resource change as a fraction of the platform, summed over components.

    Components the platform does not have at all make the change infinitely
    expensive; they can never fit anyway.
    """
    total = 0.0
    for comp in RESOURCE_COMPONENTS:
        d = getattr(delta, comp)
        if d == 0:
            continue
        cap = getattr(platform.resources, comp)
        if cap == 0:
            return math.inf
        total += d / cap
    return total


def _resource_delta(before: ResourceVector, after: ResourceVector) -> ResourceVector:
    return ResourceVector(after.dsp - before.dsp, after.bram - before.bram,
                          after.lut - before.lut, after.ff - before.ff)


def _slowest_node(point: DesignPoint, partition: Partition,
                  clock_hz: float) -> int:
    nodes = point.graph.nodes
    return max(partition.node_indices,
               key=lambda i: (node_latency(nodes[i], clock_hz), -i))


def optimise_partition(point: DesignPoint, partition: Partition,
                       platform: Platform) -> DesignPoint:
    """Greedily speed up one partition.

    Each round targets the slowest node (ties break to the lowest index) and
    tries its single-variable increments to the next larger domain value, in
    order of smallest predicted resource increase (ties break s_in, s_out,
    k). The first increment that propagates and keeps every constraint is
    committed; when none does the loop stops, because nothing larger fits or
    the node has no larger values left.
    """
    point = point.copy()
    backend = point.graph.backend
    while True:
        index = _slowest_node(point, partition, platform.clock_hz)
        node = point.graph.nodes[index]
        base = node_resources(node)
        candidates = []
        for order, var in enumerate(_FOLD_VARS):
            domain = folding_domains(node, backend)[order]
            current = getattr(node, var)
            larger = [v for v in domain if v > current]
            if not larger:
                continue
            value = larger[0]
            grown = node_resources(replace(node, **{var: value}))
            cost = _resource_scalar(_resource_delta(base, grown), platform)
            candidates.append((cost, order, var, value))
        candidates.sort(key=lambda c: (c[0], c[1]))
        committed = False
        for _, _, var, value in candidates:
            try:
                trial = propagate_matching(
                    point.with_folding(index, var, value), index, var)
            except PropagationError:
                continue
            if not validate_design(trial, platform):
                point = trial
                committed = True
                break
        if not committed:
            return point


def _merge_heuristics_met(point: DesignPoint, partition: Partition,
                          platform: Platform, memory_bound_threshold: float) -> bool:
    # memory bound: boundary bandwidth close to the platform limit
    bw = partition_bandwidth(partition, point.graph, platform)
    if bw >= memory_bound_threshold * platform.mem_bandwidth_bytes_per_s:
        return True
    slowest = point.graph.nodes[_slowest_node(point, partition, platform.clock_hz)]
    doms = folding_domains(slowest, point.graph.backend)
    if (slowest.s_in, slowest.s_out, slowest.k) == tuple(d[-1] for d in doms):
        return True  # slowest node fully unrolled
    return partition_latency(partition, point.graph, platform) \
        < platform.reconfig_time_s


def _pick_merge_neighbour(point: DesignPoint, partitions: list[Partition],
                          i: int, platform: Platform) -> int | None:
    """Neighbour with the smaller resource sum; ties prefer the predecessor."""
    options = []
    for rank, j in enumerate((i - 1, i + 1)):
        if 0 <= j < len(partitions):
            scalar = _resource_scalar(
                partition_resources(partitions[j], point.graph), platform)
            options.append((scalar, rank, j))
    if not options:
        return None
    return min(options)[2]


def rule_based(graph: HDGraph, platform: Platform, objective: str = "latency",
               batch: int = 1, *,
               memory_bound_threshold: float = 0.95) -> OptimiserResult:
    """Deterministic two-phase optimiser.

    Phase one optimises each partition of the fully split initial state on
    its own. Phase two repeatedly scans partitions in index order and,
    for each one that is memory bound, has its slowest node fully unrolled,
    or finishes faster than a reconfiguration, tries to merge it with its
    cheaper neighbour; the merged partition is re-optimised from
    resource-minimal foldings and the merge is kept only when it is feasible
    and strictly improves the objective. Identical inputs always produce
    identical results.
    """
    start = time.perf_counter()
    point = resource_minimal_init(graph)
    violations = validate_design(point, platform)
    if violations:
        raise InfeasibleInitialError(
            "resource-minimal design is infeasible: " + "; ".join(violations))
    for partition in point.partitions():
        point = optimise_partition(point, partition, platform)
    current_obj = objective_value(point, platform, objective, batch)
    evaluations = 1
    trajectory = [(0, current_obj)]
    merges = 0
    while True:
        partitions = point.partitions()
        accepted = False
        for i, partition in enumerate(partitions):
            if not _merge_heuristics_met(point, partition, platform,
                                         memory_bound_threshold):
                continue
            j = _pick_merge_neighbour(point, partitions, i, platform)
            if j is None:
                continue
            left, right = partitions[min(i, j)], partitions[max(i, j)]
            trial = point.with_cut_toggled(left.stop)
            merged = Partition(left.start, right.stop)
            for idx in merged.node_indices:
                node = trial.graph.nodes[idx]
                node.s_in = node.s_out = node.k = 1
            if validate_design(trial, platform):
                continue  # the merged partition does not fit even fully folded
            trial = optimise_partition(trial, merged, platform)
            if validate_design(trial, platform):
                continue
            trial_obj = objective_value(trial, platform, objective, batch)
            evaluations += 1
            if trial_obj < current_obj:
                point = trial
                current_obj = trial_obj
                merges += 1
                trajectory.append((merges, current_obj))
                accepted = True
                break  # partition indices shifted; rescan
        if not accepted:
            break
    return OptimiserResult(
        best_point=point,
        best_objective=current_obj,
        trajectory=trajectory,
        wall_time_s=time.perf_counter() - start,
        evaluations=evaluations,
    )


def _node_assignment_table(graph: HDGraph) -> list[list[tuple]]:
    """Per node: every folding triple with its cycles and resource counts.

    Triples that can never satisfy intra matching are dropped up front; they
    would be discarded during enumeration regardless.
    """
    table = []
    for node in graph.nodes:
        intra = node.requires_intra_match and graph.backend.enforce_intra_matching
        entries = []
        for s_in, s_out, k in itertools.product(*folding_domains(node, graph.backend)):
            if intra and s_in != s_out:
                continue
            trial = replace(node, s_in=s_in, s_out=s_out, k=k)
            res = node_resources(trial)
            entries.append((s_in, s_out, k, node_cycles(trial),
                            res.dsp, res.bram, res.lut, res.ff))
        table.append(entries)
    return table


def _enumerate_shard(graph: HDGraph, platform: Platform, objective: str,
                     batch: int, mask_lo: int, mask_hi: int):
    """Exhaustively evaluate the cut masks in [mask_lo, mask_hi).

    Returns (improvements, examined) where improvements is the list of
    (ordinal, objective, cuts, foldings) entries that lowered the shard-local
    best, in enumeration order.
    """
    table = _node_assignment_table(graph)
    inter = graph.backend.enforce_inter_matching
    check_res = graph.backend.enforce_resource
    n = len(graph)
    clock = platform.clock_hz
    caps = platform.resources
    bw_cap = platform.mem_bandwidth_bytes_per_s
    t_conf = platform.reconfig_time_s
    bytes_io = []
    for node in graph.nodes:
        layer = node.layer
        bytes_io.append((
            layer.rows_in * layer.cols_in * layer.channels_in * layer.activation_bits / 8,
            layer.rows_out * layer.cols_out * layer.channels_out * layer.activation_bits / 8,
        ))
    combos_per_mask = math.prod(len(entries) for entries in table)
    improvements = []
    best_obj = None
    examined = 0
    for mask in range(mask_lo, mask_hi):
        cuts = tuple(e for e in range(1, n) if mask >> (e - 1) & 1)
        bounds = (0, *cuts, n)
        parts = list(zip(bounds, bounds[1:]))
        n_cuts = len(cuts)
        for combo_i, combo in enumerate(itertools.product(*table)):
            examined += 1
            ok = True
            total_latency = 0.0
            for lo, hi in parts:
                if inter:
                    for i in range(lo, hi - 1):
                        if combo[i][1] != combo[i + 1][0]:
                            ok = False
                            break
                    if not ok:
                        break
                dsp = bram = lut = ff = 0
                max_cycles = 0
                for i in range(lo, hi):
                    entry = combo[i]
                    dsp += entry[4]
                    bram += entry[5]
                    lut += entry[6]
                    ff += entry[7]
                    if entry[3] > max_cycles:
                        max_cycles = entry[3]
                if check_res and (dsp > caps.dsp or bram > caps.bram
                                  or lut > caps.lut or ff > caps.ff):
                    ok = False
                    break
                t_part = max_cycles / clock
                if not (bytes_io[lo][0] + bytes_io[hi - 1][1]) / t_part < bw_cap:
                    ok = False
                    break
                total_latency += t_part
            if not ok:
                continue
            if objective == "latency":
                obj = total_latency + n_cuts * t_conf
            else:
                obj = -batch / (batch * total_latency + n_cuts * t_conf)
            if best_obj is None or obj < best_obj:
                best_obj = obj
                improvements.append((
                    mask * combos_per_mask + combo_i, obj, cuts,
                    tuple(entry[:3] for entry in combo),
                ))
    return improvements, examined


def brute_force(graph: HDGraph, platform: Platform, objective: str = "latency",
                batch: int = 1, *, cap: int = DEFAULT_BRUTE_FORCE_CAP,
                jobs: int = 1) -> OptimiserResult:
    """Exhaustive search; guaranteed global optimum among feasible points.

    Refuses spaces larger than the cap. Enumeration is deterministic; with
    jobs > 1 the cut masks are sharded across worker processes and the merge
    reproduces the single-process result exactly.
    """
    start = time.perf_counter()
    size = design_space_size(graph)
    if size > cap:
        raise SpaceTooLargeError(
            f"design space has {size} points, above the enumeration cap {cap}")
    n_masks = 2 ** (len(graph) - 1)
    if jobs > 1 and n_masks > 1:
        step = math.ceil(n_masks / jobs)
        ranges = [(lo, min(lo + step, n_masks)) for lo in range(0, n_masks, step)]
        with ProcessPoolExecutor(max_workers=len(ranges)) as pool:
            shards = list(pool.map(
                _enumerate_shard,
                [graph] * len(ranges), [platform] * len(ranges),
                [objective] * len(ranges), [batch] * len(ranges),
                [lo for lo, _ in ranges], [hi for _, hi in ranges]))
    else:
        shards = [_enumerate_shard(graph, platform, objective, batch, 0, n_masks)]

    evaluations = sum(examined for _, examined in shards)
    trajectory = []
    best = None
    for improvements, _ in shards:  # shards cover ascending ordinal ranges
        for entry in improvements:
            if best is None or entry[1] < best[1]:
                best = entry
                trajectory.append((entry[0], entry[1]))
    if best is None:
        raise NoFeasibleDesignError(
            "no design point satisfies the constraints on this platform")

    _, _, cuts, foldings = best
    point = DesignPoint(graph=graph.copy(), cutset=CutSet(cuts))
    for node, (s_in, s_out, k) in zip(point.graph.nodes, foldings):
        node.s_in, node.s_out, node.k = s_in, s_out, k
    best_objective = objective_value(point, platform, objective, batch)
    return OptimiserResult(
        best_point=point,
        best_objective=best_objective,
        trajectory=trajectory,
        wall_time_s=time.perf_counter() - start,
        evaluations=evaluations,
    )
