"""Certified robustness of community detection via randomized smoothing on graph structure."""

__version__ = "0.1.0"

from commcert.graphio import (
    Graph,
    GroundTruth,
    PairSpace,
    StructureVector,
    apply_flips,
    build_pair_space,
    parse_communities,
    parse_edge_list,
    parse_node_labels,
    structure_vector,
)
from commcert.louvain import CommunityAssignment, louvain_detect, modularity, same_community
from commcert.smoothing import (
    CommunityFunction,
    NoiseSpec,
    SampleCounts,
    TruthTableFunction,
    evaluate_f,
    sample_noise,
    sample_under_noise,
    smoothed_output,
)
from commcert.estimate import ConfidenceSpec, beta_quantile, clopper_pearson_lower
from commcert.certify import (
    ABSTAIN,
    CertifyResult,
    RegionTable,
    certified_perturbation_size,
    certify,
    constraint_holds,
    region_size,
    region_table,
    theta,
)
