"""Temporal-difference alignment for linear long-horizon forecasters."""

from ._kernels import backend
from .losses import (
    Base, DiffSpec, LossConfig, LossReport, MetricsReport, Mode,
    combined_loss, evaluate_metrics, loss_grad_wrt_prediction, point_loss, rho, tdp, tdt, tdt_loss,
)
from .models import (
    ForecasterParams, Kind, backward, forward, init_params, load_params,
    moving_average_decompose, param_count, save_params,
)
from .series import (
    SeriesMatrix, SplitSpec, WindowBatch, ZScoreScaler, chronological_split, fit_scaler,
    gen_ar1, gen_random_walk, gen_sine_mix, inject_gaussian_noise, inverse_transform, load_csv,
    make_windows, transform,
)
from .training import AdamState, TrainConfig, TrainReport, adam_step, evaluate, fit, train_epoch

__version__ = "0.1.0"
