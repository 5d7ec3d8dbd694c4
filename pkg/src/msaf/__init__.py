"""EEG microstate analysis framework.

Resting-state EEG in, diagnosis-ready artifacts out: deterministic
preprocessing, polarity-invariant microstate segmentation, temporal
dynamics features, from-scratch classifiers with additive attribution,
and nonparametric group statistics, all driven by one seed.
"""

__version__ = "0.1.0"

from .errors import (
    AmbiguousLabels,
    BadMagic,
    ClassTooSmall,
    ConfigError,
    ConstantSample,
    DataError,
    DegenerateChannel,
    DegenerateData,
    DegenerateMap,
    DegenerateSample,
    DimensionMismatch,
    DuplicateSubject,
    EmptyBackground,
    EmptyCluster,
    EmptyCrop,
    InconsistentStates,
    InsufficientChannels,
    InvalidBand,
    InvalidConfig,
    InvalidDomain,
    InvalidRate,
    IoFailure,
    LengthMismatch,
    MissingSidecar,
    MontageMismatch,
    MsafError,
    NoPeaks,
    NonFinite,
    NonFiniteData,
    NumericError,
    RateMismatch,
    SampleSizeOutOfRange,
    ShapeMismatch,
    SingleClass,
    SingularSystem,
    TooFewGroups,
    TooFewSamples,
    TooFewSamplesForValidation,
    TooManyFeatures,
    TooShort,
    UnknownChannel,
    UnlabeledData,
    UnsupportedModel,
    ZeroGfp,
)
from .io import (
    FeatureTable,
    Montage,
    Recording,
    STANDARD_1020_NAMES,
    load_feature_table,
    load_recording,
    read_json,
    save_recording,
    standard_1020_montage,
    write_json,
)
from .preprocess import (
    FirFilter,
    apply_fir,
    average_reference,
    crop,
    design_fir_bandpass,
    design_fir_lowpass,
    design_fir_notch,
    is_average_referenced,
    resample,
    surface_laplacian,
    zscore_channels,
)
from .microstates import (
    GfpSeries,
    MicrostateMaps,
    Segmentation,
    backfit,
    find_gfp_peaks,
    gev,
    gfp,
    group_cluster,
    label_maps,
    modified_kmeans,
    select_k,
    spatial_correlation,
)
from .features import (
    FeatureVector,
    STATE_METRICS,
    build_feature_table,
    extract_features,
    feature_names,
)
from .models import (
    DEFAULT_GRIDS,
    EvalReport,
    GbtModel,
    MODEL_KINDS,
    RfModel,
    SvmModel,
    evaluate,
    grid_search,
    make_trainer,
    model_from_json_dict,
    model_to_json_dict,
    stratified_fold_indices,
    stratified_kfold_cv,
    train_gbt,
    train_model,
    train_rf,
    train_svm_ovr,
)
from .explain import (
    GlobalRanking,
    ShapExplanation,
    exact_shapley,
    explain,
    global_ranking,
    kernel_shap,
    tree_shap,
)
from .stats import (
    PairwiseResult,
    TestResult,
    chi_square_sf,
    dunn_posthoc,
    kruskal_wallis,
    normal_sf,
    shapiro_wilk,
)
from .synth import (
    CANONICAL_LABELS,
    STANDARD_BANDS,
    SynthConfig,
    band_cohort_profiles,
    canonical_templates,
    default_cohort_profiles,
    generate,
    make_band_cohort,
    make_cohort,
    transition_from_weights,
)
from .topo import project_positions, render_bar_chart, render_maps, render_topomap
from .pipeline import (
    PipelineConfig,
    band_sweep,
    config_hash,
    run_pipeline,
)

__all__ = [
    "__version__",
    "MsafError", "ConfigError", "DataError", "NumericError",
    "AmbiguousLabels", "BadMagic", "ClassTooSmall", "ConstantSample",
    "DegenerateChannel", "DegenerateData", "DegenerateMap",
    "DegenerateSample", "DimensionMismatch", "DuplicateSubject",
    "EmptyBackground", "EmptyCluster", "EmptyCrop", "InconsistentStates",
    "InsufficientChannels", "InvalidBand", "InvalidConfig", "InvalidDomain",
    "InvalidRate", "IoFailure", "LengthMismatch", "MissingSidecar",
    "MontageMismatch", "NoPeaks", "NonFinite", "NonFiniteData",
    "RateMismatch", "SampleSizeOutOfRange", "ShapeMismatch", "SingleClass",
    "SingularSystem", "TooFewGroups", "TooFewSamples",
    "TooFewSamplesForValidation", "TooManyFeatures", "TooShort",
    "UnknownChannel", "UnlabeledData", "UnsupportedModel", "ZeroGfp",
    "Montage", "Recording", "FeatureTable", "STANDARD_1020_NAMES",
    "standard_1020_montage", "save_recording", "load_recording",
    "load_feature_table", "read_json", "write_json",
    "FirFilter", "design_fir_bandpass", "design_fir_lowpass",
    "design_fir_notch", "apply_fir", "zscore_channels", "average_reference",
    "is_average_referenced",
    "surface_laplacian", "crop", "resample",
    "GfpSeries", "MicrostateMaps", "Segmentation", "gfp", "find_gfp_peaks",
    "spatial_correlation", "modified_kmeans", "gev", "select_k",
    "group_cluster", "backfit", "label_maps",
    "FeatureVector", "STATE_METRICS", "extract_features", "feature_names",
    "build_feature_table",
    "MODEL_KINDS", "DEFAULT_GRIDS", "SvmModel", "RfModel", "GbtModel",
    "EvalReport", "train_svm_ovr", "train_rf", "train_gbt", "train_model",
    "make_trainer", "evaluate", "stratified_fold_indices",
    "stratified_kfold_cv", "grid_search",
    "model_to_json_dict", "model_from_json_dict",
    "ShapExplanation", "GlobalRanking", "exact_shapley", "kernel_shap",
    "tree_shap", "explain", "global_ranking",
    "TestResult", "PairwiseResult", "shapiro_wilk", "kruskal_wallis",
    "dunn_posthoc", "chi_square_sf", "normal_sf",
    "CANONICAL_LABELS", "STANDARD_BANDS", "SynthConfig", "canonical_templates",
    "transition_from_weights", "generate", "default_cohort_profiles",
    "band_cohort_profiles", "make_cohort", "make_band_cohort",
    "project_positions", "render_topomap", "render_maps", "render_bar_chart",
    "PipelineConfig", "run_pipeline", "band_sweep", "config_hash",
]
