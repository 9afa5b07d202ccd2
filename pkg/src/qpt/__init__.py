"""Reliable error bars and confidence regions for quantum process
tomography, by Metropolis sampling over channels or bipartite states.

The pipeline: simulate or load a measurement record, random-walk the
posterior-like distribution it induces, histogram a figure of merit
(diamond distance, entanglement fidelity, worst-case entanglement
fidelity) along the chain, fit the histogram, and turn the fit into
quantum error bars and a rigorous confidence interval.
"""

from .channels import (
    ChannelDims,
    ChannelSample,
    apply_channel,
    bipartite_to_channel,
    choi_constraint_residuals,
    choi_of_map,
    depolarizing,
    maximally_entangled,
    sample_to_choi,
    swap_factors,
)
from .errors import (
    BadParameter,
    BadPOVM,
    DegenerateFit,
    DimensionMismatch,
    InsufficientBins,
    NoConvergence,
    NonHermitian,
    NotPSD,
    NotState,
    NotUnitary,
    QptError,
    RankDeficient,
    SolverFailure,
    TargetUnreachable,
    TooFewSamples,
    TuningFailed,
    Unsupported,
)
from .fom import (
    DIAMOND,
    ENT_FID,
    WORST_FID,
    BipartiteFigure,
    DiamondDistance,
    FigureSpec,
    WorstFidelity,
    diamond_distance,
    entanglement_fidelity,
    identity_choi,
    induced_bipartite_fom,
    make_channel_evaluator,
    worst_entanglement_fidelity,
)
from .qmat import (
    dagger,
    eigh,
    fidelity,
    haar_state_vector,
    haar_unitary,
    is_hermitian,
    kron,
    mat_inv_sqrt,
    mat_sqrt,
    op_norm,
    partial_trace,
    purified_distance,
    random_density,
    trace_norm,
)
from .regions import (
    ConfidenceReport,
    FitParams,
    QuantumErrorBars,
    RegionParams,
    assemble_report,
    enlargement_delta,
    fit_histogram,
    log_sym_dim,
    quantum_error_bars,
    tail_quantile,
    weight_threshold,
)
from .sdpcore import CachedSolver, ConicProblem, ConicSolution, smat, solve, svec
from .tomodata import (
    BipartiteLikelihood,
    Dataset,
    Likelihood,
    Scheme,
    Setting,
    aa_input_state,
    load_dataset,
    log_likelihood,
    output_state,
    rescale_counts,
    save_dataset,
    simulate,
    standard_settings,
)
from .walkers import (
    ChainResult,
    Histogram,
    WalkerConfig,
    auto_bin_edges,
    bin_error_bars,
    binning_analysis,
    load_histogram_csv,
    merge_chains,
    run_channel_chain,
    run_state_chain,
    save_chain_csv,
    save_histogram_csv,
    tune_step_size,
)

__version__ = "0.1.0"
