"""Spatiotemporal field reconstruction from sparse sensors with incomplete time series.

Sensor windows are first completed by l1 recovery in the Fourier domain,
then mapped to the full field by an LSTM encoder and a shallow decoder.
"""

from .bpdn import RecoveryResult, SolverConfig, recover_batch, recover_window, solve_bpdn
from .config import RunConfig, load_config
from .field import Field, read_field, write_field
from .metrics import MetricReport, normalized_error, psnr, ssim
from .pipeline import compare, run_pipeline, train_and_evaluate
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "Field", "MetricReport", "RecoveryResult", "RunConfig", "SolverConfig", "SyntheticSpec",
    "compare", "generate_synthetic", "load_config", "normalized_error", "psnr", "read_field",
    "recover_batch", "recover_window", "run_pipeline", "solve_bpdn", "ssim", "train_and_evaluate",
    "write_field",
]
