"""Estimator-style forecasters: the trained network and its two baselines.

All three take reflectivity in physical dBZ, shaped (n_samples, t_in, H, W),
and return (n_samples, k_out, H, W) dBZ.  Normalization to the network's
unit range happens internally, so callers never handle normalized fields.

The estimators follow the fit/predict/get_params conventions: constructor
arguments are stored verbatim, learned state lands in trailing-underscore
attributes during fit, and predicting before fitting raises NotFittedError.
"""

from __future__ import annotations

import time

import numpy as np
from sklearn.base import BaseEstimator

from . import losses, tensor as T
from .errors import ConfigurationError, DimensionError
from .flow import estimate_motion, extrapolate, persistence
from .metrics import contingency_table, skill_scores
from .network import ModelConfig, ScanCastNet, load_checkpoint, save_checkpoint
from .optim import Adam, cosine_lr
from .synthetic import MAX_DBZ
from .validation import check_dem, check_fitted, check_frames_array

__all__ = ["PersistenceForecaster", "OpticalFlowForecaster", "ScanCastForecaster"]


class PersistenceForecaster(BaseEstimator):
    """Null baseline: every lead repeats the most recent observed frame."""

    def __init__(self, horizon: int = 8):
        self.horizon = horizon

    def fit(self, X, y=None):
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        X = check_frames_array(X)
        self.grid_ = X.shape[2:]
        return self

    def predict(self, X):
        check_fitted(self, ("grid_",))
        X = check_frames_array(X, grid=self.grid_)
        return np.stack([persistence(X[s, -1], self.horizon) for s in range(X.shape[0])])


class OpticalFlowForecaster(BaseEstimator):
    """Extrapolation baseline: motion estimated from the last two observed
    frames by block matching, then applied forward with frozen intensities."""

    def __init__(self, horizon: int = 8, block_size: int = 8, search_radius: int = 4):
        self.horizon = horizon
        self.block_size = block_size
        self.search_radius = search_radius

    def fit(self, X, y=None):
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        X = check_frames_array(X)
        if X.shape[1] < 2:
            raise DimensionError("optical flow needs at least 2 input frames")
        self.grid_ = X.shape[2:]
        return self

    def predict(self, X):
        check_fitted(self, ("grid_",))
        X = check_frames_array(X, grid=self.grid_)
        if X.shape[1] < 2:
            raise DimensionError("optical flow needs at least 2 input frames")
        out = np.empty((X.shape[0], self.horizon) + self.grid_)
        for s in range(X.shape[0]):
            flow = estimate_motion(
                X[s, -2], X[s, -1],
                block_size=self.block_size, search_radius=self.search_radius,
            )
            out[s] = extrapolate(X[s, -1], flow, self.horizon)
        return out


def _pooled_csi(pred_dbz: np.ndarray, truth_dbz: np.ndarray, threshold: float):
    table = contingency_table(pred_dbz, truth_dbz, threshold)
    return skill_scores(table).csi


class ScanCastForecaster(BaseEstimator):
    """The learned forecaster: scan+attention network trained with the
    spectral objective under Adam and a cosine learning-rate schedule.

    A run is pinned by (constructor params, data): the network is seeded
    from `seed`, minibatch shuffling uses an independent stream of the same
    seed, and the optimizer walks parameters in a frozen order, so repeated
    fits on identical inputs produce bit-identical weights.

    Divergence (a non-finite training loss) does not raise: training stops,
    the last finished epoch's weights are restored, and `diverged_` /
    `stop_reason_` record what happened.
    """

    def __init__(
        self,
        t_in: int = 4,
        horizon: int = 8,
        height: int = 32,
        width: int = 32,
        base_channels: int = 16,
        d_feat: int = 16,
        n_state: int = 4,
        n_heads: int = 4,
        n_epochs: int = 40,
        batch_size: int = 8,
        learning_rate: float = 2e-3,
        lambda_spectral: float = 1.0,
        lambda_mse: float = 0.0,
        frequency_weighting: bool = False,
        seed: int = 0,
        verbose: int = 0,
    ):
        self.t_in = t_in
        self.horizon = horizon
        self.height = height
        self.width = width
        self.base_channels = base_channels
        self.d_feat = d_feat
        self.n_state = n_state
        self.n_heads = n_heads
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lambda_spectral = lambda_spectral
        self.lambda_mse = lambda_mse
        self.frequency_weighting = frequency_weighting
        self.seed = seed
        self.verbose = verbose

    # -- internals ---------------------------------------------------------

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            height=self.height,
            width=self.width,
            t_in=self.t_in,
            k_out=self.horizon,
            base_channels=self.base_channels,
            d_feat=self.d_feat,
            n_state=self.n_state,
            n_heads=self.n_heads,
            seed=self.seed,
        )

    def _normalize(self, frames_dbz: np.ndarray) -> np.ndarray:
        return np.clip(frames_dbz / MAX_DBZ, 0.0, 1.0)

    def _dem_tensor(self):
        if self.dem_ is None:
            return None
        return T.Tensor(self.dem_[None, None, :, :])

    def _forward_batch(self, x_norm: np.ndarray, dem_t):
        # the terrain grid stays (1, 1, H, W); its tokens broadcast across
        # the batch inside the decoder fusion
        return self.net_.forward(T.Tensor(x_norm), dem_t)

    def _predict_norm(self, x_norm: np.ndarray, batch_size: int = 16) -> np.ndarray:
        dem_t = self._dem_tensor()
        chunks = []
        for start in range(0, x_norm.shape[0], batch_size):
            xb = x_norm[start:start + batch_size]
            chunks.append(self._forward_batch(xb, dem_t).data)
        return np.concatenate(chunks, axis=0)

    # -- estimator API -----------------------------------------------------

    def fit(self, X, y, dem=None, validation_data=None):
        """Train on (X: (S, t_in, H, W), y: (S, horizon, H, W)), both dBZ.

        `dem` is an optional (H, W) terrain grid normalized to [0, 1] shared
        by every sample.  `validation_data` is an optional (X_val, y_val)
        pair; when given, per-epoch validation loss and CSI at 20 dBZ are
        recorded and the best-validation-loss weights are restored at the
        end of training.
        """
        config = self._model_config()
        grid = (config.height, config.width)
        X = check_frames_array(X, name="X", n_frames=self.t_in, grid=grid)
        y = check_frames_array(y, name="y", n_frames=self.horizon, grid=grid)
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} samples, y has {y.shape[0]}")
        if self.n_epochs < 1:
            raise ConfigurationError(f"n_epochs must be >= 1, got {self.n_epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        self.dem_ = None if dem is None else check_dem(dem, grid)
        val = None
        if validation_data is not None:
            x_val, y_val = validation_data
            x_val = check_frames_array(x_val, name="X_val", n_frames=self.t_in, grid=grid)
            y_val = check_frames_array(y_val, name="y_val", n_frames=self.horizon, grid=grid)
            if x_val.shape[0] != y_val.shape[0]:
                raise DimensionError("validation X/y sample counts differ")
            val = (self._normalize(x_val), self._normalize(y_val), y_val)

        self.net_ = ScanCastNet(config)
        self.config_ = config
        params = [p for _, p in self.net_.named_parameters()]
        optimizer = Adam(params, lr=self.learning_rate)
        rng = np.random.default_rng(self.seed)
        weight_map = None
        if self.frequency_weighting:
            weight_map = losses.high_frequency_weight_map(config.height, config.width)

        x_all = self._normalize(X)
        y_all = self._normalize(y)
        n = x_all.shape[0]
        dem_t = self._dem_tensor()

        self.history_ = []
        self.diverged_ = False
        self.stop_reason_ = "completed"
        best_val = np.inf
        best_state = None
        last_good = self.net_.state_dict()
        start = time.perf_counter()
        for epoch in range(self.n_epochs):
            lr = cosine_lr(epoch, self.n_epochs, self.learning_rate)
            order = rng.permutation(n)
            batch_losses = []
            aborted = False
            for b0 in range(0, n, self.batch_size):
                idx = order[b0:b0 + self.batch_size]
                optimizer.zero_grads()
                # exploding weights overflow inside the forward pass before
                # the non-finite loss is caught below; keep that quiet
                with np.errstate(over="ignore", invalid="ignore"), T.Tape() as tape:
                    pred = self._forward_batch(x_all[idx], dem_t)
                    report = losses.combined_loss(
                        pred, T.Tensor(y_all[idx]),
                        lambda_spec=self.lambda_spectral,
                        lambda_mse=self.lambda_mse,
                        weight_map=weight_map,
                    )
                    loss_value = float(report.total.data)
                    if not np.isfinite(loss_value):
                        aborted = True
                        break
                    tape.backward(report.total)
                optimizer.step(lr=lr)
                batch_losses.append(loss_value)
            if aborted:
                self.net_.load_state_dict(last_good)
                self.diverged_ = True
                self.stop_reason_ = f"non-finite training loss in epoch {epoch}"
                break
            record = {
                "epoch": epoch,
                "lr": lr,
                "train_loss": float(np.mean(batch_losses)),
            }
            if val is not None:
                record.update(self._validate(*val))
                if record["val_loss"] < best_val:
                    best_val = record["val_loss"]
                    best_state = self.net_.state_dict()
            last_good = self.net_.state_dict()
            self.history_.append(record)
            if self.verbose:
                parts = [f"epoch {epoch:3d}", f"lr {lr:.2e}", f"train {record['train_loss']:.4f}"]
                if val is not None:
                    parts.append(f"val {record['val_loss']:.4f}")
                    if record["val_csi20"] is not None:
                        parts.append(f"csi20 {record['val_csi20']:.3f}")
                print("  ".join(parts))
        if best_state is not None and not self.diverged_:
            self.net_.load_state_dict(best_state)
        self.n_epochs_run_ = len(self.history_)
        self.fit_seconds_ = time.perf_counter() - start
        return self

    def _validate(self, x_norm, y_norm, y_dbz):
        pred_norm = self._predict_norm(x_norm)
        residual = pred_norm - y_norm
        h, w = residual.shape[-2:]
        # same quantity combined_loss reports, computed without a tape
        mse = float(np.mean(residual**2))
        spec = (h * w) ** 2 * mse
        val_loss = self.lambda_spectral * spec + self.lambda_mse * mse
        if self.frequency_weighting:
            pred_t = T.Tensor(pred_norm)
            report = losses.combined_loss(
                pred_t, T.Tensor(y_norm),
                lambda_spec=self.lambda_spectral, lambda_mse=self.lambda_mse,
                weight_map=losses.high_frequency_weight_map(h, w),
            )
            val_loss = float(report.total.data)
        csi = _pooled_csi(pred_norm * MAX_DBZ, y_dbz, 20.0)
        return {"val_loss": val_loss, "val_csi20": csi}

    def predict(self, X, dem=None):
        """Forecast `horizon` frames of dBZ for each sample in X."""
        check_fitted(self, ("net_", "config_"))
        grid = (self.config_.height, self.config_.width)
        X = check_frames_array(X, name="X", n_frames=self.config_.t_in, grid=grid)
        if dem is not None:
            self_dem = self.dem_
            try:
                self.dem_ = check_dem(dem, grid)
                return self._predict_norm(self._normalize(X)) * MAX_DBZ
            finally:
                self.dem_ = self_dem
        return self._predict_norm(self._normalize(X)) * MAX_DBZ

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        """Write the fitted network (weights + architecture) to a checkpoint."""
        check_fitted(self, ("net_",))
        save_checkpoint(path, self.net_)

    @classmethod
    def from_checkpoint(cls, path, dem=None) -> "ScanCastForecaster":
        """Rebuild a fitted forecaster from a checkpoint file."""
        net = load_checkpoint(path)
        cfg = net.config
        est = cls(
            t_in=cfg.t_in, horizon=cfg.k_out, height=cfg.height, width=cfg.width,
            base_channels=cfg.base_channels, d_feat=cfg.d_feat,
            n_state=cfg.n_state, n_heads=cfg.n_heads, seed=cfg.seed,
        )
        est.net_ = net
        est.config_ = cfg
        est.dem_ = None if dem is None else check_dem(dem, (cfg.height, cfg.width))
        est.history_ = []
        est.diverged_ = False
        est.stop_reason_ = "loaded from checkpoint"
        est.n_epochs_run_ = 0
        return est
