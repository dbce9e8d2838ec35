"""Quantile control charts for hybrid-censored generalized Weibull lifetimes."""
from .censoring import CensoringKind, CensoringScheme, HybridCensoredSample, censor
from .charts import (ChartConfig, ChartKind, ControlChart, MonitorVerdict, Signal, build_bhc,
                     build_shc, empirical_quantile, monitor)
from .distribution import GwParams, cdf, logpdf, pdf, quantile, sample, sf
from .estimation import FitConfig, FitResult, em_fit, observed_loglik, quantile_mle
from .exceptions import (ConvergenceError, DegenerateSampleError, DomainError, GwChartError,
                         InformationError)
from .information import complete_info, missing_info, observed_info, quantile_se
from .simulation import SimDesign, estimate_arl, preset_design, scheme_catalog

__version__ = "0.1.0"
