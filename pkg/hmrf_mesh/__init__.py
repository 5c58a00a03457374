# -*- coding: utf-8 -*-

""" init """

from .__version__ import VERSION, __version__
from .em import (
    EmState,
    RunConfig,
    SegmentationResult,
    e_step,
    iter_states,
    log_likelihood,
    lower_bound,
    m_step,
    result_from_json,
    result_to_json,
    run,
)
from .exceptions import MeshError, MeshParseError, NumericalError
from .hmrf import (
    EnergyBreakdown,
    LabelField,
    brute_force_map,
    icm_sweep,
    map_labels,
    potts_energy,
    unary_costs,
)
from .mesh import (
    AdjacencyGraph,
    FeatureMatrix,
    FeatureMode,
    TriangleMesh,
    build_adjacency,
    face_features,
    parse_obj,
    parse_ply,
    read_mesh,
    write_ply_colored,
)
from .model import (
    ClassParams,
    CovarianceUpdate,
    DensityMode,
    InitMode,
    ModelConfig,
    init_params,
    log_density,
    log_densities,
)
from .synthbench import (
    MetricsReport,
    SynthKind,
    SynthSpec,
    benchmark,
    boundary_smoothness,
    evaluate,
    label_accuracy,
    synth,
)

try:
    from colorama import init

    init()

except Exception:
    pass
