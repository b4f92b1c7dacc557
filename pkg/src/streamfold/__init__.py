"""streamfold: folding and reconfiguration-partition optimisation for
streaming CNN accelerators on FPGAs."""

__version__ = "0.1.0"

from .backends import (
    BACKENDS,
    FINN_LIKE,
    FPGACONVNET_LIKE,
    HLS4ML_LIKE,
    BackendDescriptor,
    ExportError,
    ResourceVector,
    UnsupportedLayerError,
    design_objective,
    export_design,
    get_backend,
    load_design,
    map_variables,
    node_latency,
    node_resources,
)
from .evaluation import (
    Evaluation,
    Platform,
    PlatformError,
    check_bandwidth,
    check_channel_factors,
    check_inter_matching,
    check_intra_matching,
    check_resources,
    design_space_size,
    evaluate_design,
    load_platform,
    objective_latency,
    objective_throughput,
    objective_value,
    parse_platform,
    partition_latency,
    validate_design,
)
from .hdgraph import (
    CutSet,
    DesignPoint,
    HDGraph,
    HDNode,
    Partition,
    PropagationError,
    apply_cuts,
    build_hdgraph,
    divisors,
    folding_domains,
    propagate_matching,
    resource_minimal_init,
)
from .network import (
    LayerKind,
    LayerSpec,
    NetworkModel,
    ParseError,
    load_network,
    parse_network,
    serialize_network,
    validate_network,
)
from .optimizers import (
    AnnealingConfig,
    InfeasibleInitialError,
    NoFeasibleDesignError,
    OptimiserResult,
    SpaceTooLargeError,
    annealing_decision,
    brute_force,
    cooling_schedule,
    optimise_partition,
    random_transform,
    rule_based,
    simulated_annealing,
)
