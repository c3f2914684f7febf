"""Finite horocyclic products of percolation trees and their isoperimetry."""

from .errors import (
    EmptyOverlapError,
    EnumerationBudgetError,
    HorolabError,
    ParameterError,
    ResourceLimitError,
    UnknownVertexError,
    ZeroVolumeError,
)
from .horoproduct import (
    HoroGraph,
    HoroVertex,
    build_dl_window,
    build_product,
    connected_component,
    degree,
    union_product_check,
)
from .isoperimetry import (
    IsoReport,
    SubsetSelection,
    anchored_constant_exact,
    cut_lower_bound_check,
    folner_ratio,
    inner_boundary,
    iso_ratio,
    outer_boundary,
    tetraeder_subset,
    window_boundary_crosscheck,
)
from .leveled_tree import (
    BitSource,
    LevelCounts,
    LeveledTree,
    TreeParams,
    edge_open,
    extend_window,
    is_ancestor,
    leaf_count_formula,
    level_counts,
    mean_offspring,
    offspring_pmf,
    sample_window_tree,
)
from .statistics import (
    FolnerSeries,
    MartingaleTrack,
    all_closed_probability,
    growth_condition_check,
    martingale_track,
    run_folner_experiment,
    simulate_level_counts,
)

__version__ = "0.1.0"
