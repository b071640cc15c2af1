"""Surprise adequacy toolkit: score how novel inputs are to a trained model.

The pipeline: capture per-layer activation traces of a model (or generate
them with the built-in toy nets), score new inputs by likelihood-based or
distance-based surprise against the training traces, then bucket scores into
coverage figures, detect adversarial inputs, or pick inputs by surprise
range. Everything is deterministic under a fixed seed.
"""

from .coverage import (
    BucketConfig,
    CoverageResult,
    GrowthRow,
    bucket_of,
    cumulative_coverage,
    kmnc,
    nbc_snac,
    neuron_coverage,
    suggest_upper_bound,
    surprise_coverage,
    write_growth_csv,
)
from .detect import (
    DetectionResult,
    LabeledScores,
    LogisticModel,
    detection_experiment,
    fit_logistic,
    roc_auc,
)
from .dsa import ClassIndex, DsaScore, build_class_index, dsa_batch, dsa_score
from .errors import (
    ArrayFormatError,
    BadMagicError,
    BadShapeError,
    BandwidthFactorizationError,
    ColumnOutOfBoundsError,
    DegenerateLabelsError,
    DegenerateReferenceError,
    DimensionMismatchError,
    EmptyRangeError,
    FortranOrderError,
    InsufficientClassRowsError,
    ManifestError,
    MissingLabelsError,
    NoNeuronsRetainedError,
    SingleClassError,
    SurprisalError,
    TraceValidationError,
    TruncatedPayloadError,
    UnknownClassError,
    UnknownLayerError,
    UnsupportedDtypeError,
)
from .guide import (
    CurvePoint,
    SampleResult,
    SaRange,
    four_range_plan,
    sa_order_curve,
    sample_by_range,
    write_curve_csv,
    write_plan_json,
)
from .lsa import (
    DensityModel,
    TrainingProfile,
    build_profile,
    fit_density_model,
    fit_kde,
    log_density,
    lsa_batch,
    lsa_score,
    scott_bandwidth,
    scott_factor,
)
from .report import SurpriseReport, read_report_csv
from .toynet import (
    DenseLayer,
    DenseNet,
    FixtureBundle,
    forward_with_traces,
    load_net,
    make_fixture,
    random_net,
    save_net,
)
from .trace_io import (
    Manifest,
    ManifestLayer,
    load_traceset,
    read_array_file,
    read_label_file,
    read_manifest,
    write_array_file,
    write_traceset,
)
from .traces import (
    LayerSpec,
    NeuronSelector,
    TraceSet,
    concat_tracesets,
    layers_from_counts,
    partition_by_class,
    select_columns,
)

__version__ = "0.1.0"
