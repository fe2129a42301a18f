"""Fixed-effects panel regression with leverage-aware robust covariance.

The pieces compose in a straight line: load or build a panel, demean it,
fit, then pick a covariance estimator for inference::

    from panelhc import (
        ColumnMap, load_csv, within_transform, fit_within, leverage,
        vcov_phc3, t_test,
    )

    panel = load_csv("panel.csv", ColumnMap(y="y", x=("x1", "x2")))
    dm = within_transform(panel)
    fit = fit_within(dm)
    est = vcov_phc3(fit, dm, leverage(fit, dm))
    print(t_test(fit, est, 0, 0.0))
"""

from .errors import (
    ConfigurationError,
    DataError,
    DegenerateLeverageError,
    EstimationError,
    ExperimentOrderError,
    InfiniteStatisticError,
    InsufficientDOFError,
    PanelError,
    ParseError,
    PerfectLeverageError,
    RestrictionError,
    SingularDesignError,
)
from .fe_core import FEFit, LeverageSet, fit_within, leave_one_out, leverage, loo_mean
from .inference import (
    LinearRestriction,
    TestResult,
    conf_interval,
    dist,
    t_test,
    wald_test,
)
from .montecarlo import (
    Contamination,
    McConfig,
    McMetrics,
    SizeResult,
    TrueParams,
    empirical_percentile,
    generate_panel,
    moments_of_w,
    run_power_experiment,
    run_size_experiment,
    write_metrics_csv,
    write_power_csv,
)
from .paneldata import (
    ColumnMap,
    DemeanedPanel,
    PanelDataset,
    load_csv,
    within_transform,
)
from .vcov import (
    VcovEstimate,
    VcovKind,
    to_csv,
    to_json,
    vcov_conventional,
    vcov_phc0,
    vcov_phc3,
    vcov_phc6,
    vcov_phcjk,
    vcov_phcjk_closed,
)

__version__ = "0.1.0"
