"""Event studies, spillover scans, and matched treatment effects for
daily financial return panels, with a deterministic synthetic data
generator for end-to-end validation."""

from .causal import (
    AttResult,
    BalanceReport,
    MatchedPair,
    MatchedSample,
    ObservationUnit,
    PropensityFit,
    SupportReport,
    UnitWindow,
    balance_check,
    build_units,
    caliper_match,
    common_support_report,
    estimate_att,
    estimate_propensity,
)
from .config import (
    PlaceboSettings,
    PsmSettings,
    RunConfig,
    VarSettings,
    load_config,
    parse_config,
    resolved_dict,
)
from .errors import (
    ConfigError,
    ConflictError,
    CoverageError,
    DataAccessError,
    DegenerateLabelsError,
    DegenerateVarianceError,
    DomainError,
    EmptyJoinError,
    EventLensError,
    MissingFactorError,
    NoSupportError,
    NotPositiveDefiniteError,
    ParseError,
    SampleSizeError,
    SingularDesignError,
    UnknownAssetError,
    ValidationError,
)
from .event_study import (
    MODEL_KINDS,
    BenchmarkModel,
    EventStudyResult,
    PlaceboSummary,
    abnormal_returns,
    car_and_test,
    fit_benchmark,
    mean_ar_standard_error,
    placebo_study,
    required_factor_columns,
    run_event_study,
)
from .market_data import (
    EventSpec,
    FactorTable,
    PortfolioSpec,
    PricePanel,
    ReturnPanel,
    ReturnSeries,
    align_series,
    build_portfolio,
    complete_cases,
    compute_returns,
    load_factors,
    load_prices,
    slice_windows,
)
from .spillover import (
    CONTROL_TO_TREATMENT,
    TREATMENT_TO_CONTROL,
    CcfResult,
    GrangerResult,
    GrangerScan,
    IrfResult,
    LagSelection,
    VarModel,
    cross_correlation,
    fit_var,
    granger_scan,
    granger_test,
    impulse_responses,
    select_lag,
)
from .stats import (
    BootstrapSummary,
    LogisticFit,
    OlsFit,
    RngStream,
    bootstrap_se,
    f_cdf_upper,
    fit_logistic,
    fit_ols,
    predict_proba,
    regularized_incomplete_beta,
    significance_stars,
    t_cdf_two_sided,
)
from .synth import (
    DgpSpec,
    GroundTruth,
    PlantedSelection,
    PlantedSpillover,
    SynthPanel,
    generate,
    write_factors_csv,
    write_prices_csv,
)

__version__ = "0.1.0"
