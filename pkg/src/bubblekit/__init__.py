"""Detection, segmentation and forecasting of speculative bubbles in monthly price series."""
__version__ = "0.1.0"

from ._validation import DataError, NumericError  # noqa: E402
from .changepoint import CpmConfig, KSChangePointDetector, segment_returns  # noqa: E402
from .forecast import SarimaOrder, dm_test, fit_sarima, fit_structural, rolling_one_step  # noqa: E402
from .regress import ElasticNetLogit, LogitRegression, cv_tune, fit_enet, fit_logit  # noqa: E402
from .simulate import DgpConfig, mc_study, simulate_path  # noqa: E402
from .ts import Dataset, TimeSeries, TransformSpec, load_dataset  # noqa: E402
from .unitroot import AdfSpec, adf_test, exuberance_scan, kpss_test  # noqa: E402
from .var import VarSpec, fit_var, granger_wald, irf_cholesky, johansen_trace  # noqa: E402

__all__ = [
    "AdfSpec", "CpmConfig", "DataError", "Dataset", "DgpConfig", "ElasticNetLogit", "KSChangePointDetector",
    "LogitRegression", "NumericError", "SarimaOrder", "TimeSeries", "TransformSpec", "VarSpec", "adf_test",
    "cv_tune", "dm_test", "exuberance_scan", "fit_enet", "fit_logit", "fit_sarima", "fit_structural",
    "fit_var", "granger_wald", "irf_cholesky", "johansen_trace", "kpss_test", "load_dataset", "mc_study",
    "rolling_one_step", "segment_returns", "simulate_path",
]
