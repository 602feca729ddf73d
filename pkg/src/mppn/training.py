"""Run configuration, model adapters, and the train/evaluate orchestration.

A run is described by a flat key=value text (JSON values per line; a JSON
object file is accepted too) that round-trips losslessly.  Checkpoints
embed that text plus the resolved facts of the run (detected periods,
channel count and names) so evaluation can rebuild the exact model.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, model
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (MetricsAccumulator, SeriesDataset, Standardizer, chronological_split,
                   iter_batches, load_csv, window_origins)
from .errors import ConfigError, DivergenceError, FormatError
from .optim import Adam
from .periods import detect_periods
from .predictability import dataset_predictability
from .rng import SplitMix64, derive
from .tensor import Tensor

log = logging.getLogger(__name__)

MODEL_KINDS = ("mppn", "dlinear", "nlinear", "naive")


@dataclass
class RunConfig:
    model: str = "mppn"
    data: str = ""
    split_scheme: str = "standard"
    lookback: int = 336
    horizon: int = 96
    hidden: int = 48
    resolutions: tuple[int, ...] = (1, 3, 4, 6)
    periods: tuple[int, ...] | None = None  # explicit override; None = detect
    top_k: int = 2
    overlap: bool = False
    moving_average: int = 25
    lr: float = 1e-3
    weight_decay: float = 1e-5
    max_epochs: int = 30
    patience: int = 3
    batch_size: int = 32
    seed: int = 0
    q: int = 10
    binning: str = "equal-frequency"
    date_column: bool = True
    fill_missing: bool = False

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind '{self.model}', expected one of {MODEL_KINDS}")
        self.resolutions = tuple(self.resolutions)
        if self.periods is not None:
            self.periods = tuple(self.periods)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            lines.append(f"{f.name}={json.dumps(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple["RunConfig", dict]:
        """Parse key=value lines (or one JSON object); unknown keys are
        returned separately."""
        stripped = text.lstrip()
        if stripped.startswith("{"):
            raw = json.loads(text)
        else:
            raw = {}
            for ln, line in enumerate(text.splitlines(), 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"config line {ln}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                try:
                    raw[key.strip()] = json.loads(value.strip())
                except json.JSONDecodeError:
                    raw[key.strip()] = value.strip()
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs, extras = {}, {}
        for key, value in raw.items():
            if key in known:
                if isinstance(value, list):
                    value = tuple(value)
                kwargs[key] = value
            else:
                extras[key] = value
        return cls(**kwargs), extras

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg, extras = cls.from_text(Path(path).read_text(encoding="utf-8"))
        if extras:
            raise ConfigError(f"{path}: unknown config keys {sorted(extras)}")
        return cfg


def config_blob(run: RunConfig, extras: dict) -> str:
    lines = [run.to_text().rstrip("\n")]
    for key in sorted(extras):
        lines.append(f"{key}={json.dumps(extras[key])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# model adapters

class Forecaster:
    kind = "base"

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return []

    def forward_batch(self, xb: Tensor) -> Tensor:
        raise NotImplementedError


class MPPNForecaster(Forecaster):
    kind = "mppn"

    def __init__(self, config: model.MPPNConfig):
        self.config = config
        self.params = model.MPPNParams.init(config)

    def named_parameters(self):
        return self.params.named_parameters()

    def forward_batch(self, xb):
        return model.forward_batch(xb, self.params, self.config)


class NLinearForecaster(Forecaster):
    kind = "nlinear"

    def __init__(self, lookback: int, horizon: int, seed: int):
        self.params = baselines.NLinearParams.init(lookback, horizon, seed)

    def named_parameters(self):
        return self.params.named_parameters()

    def forward_batch(self, xb):
        return baselines.nlinear_forward(xb, self.params)


class DLinearForecaster(Forecaster):
    kind = "dlinear"

    def __init__(self, lookback: int, horizon: int, seed: int, window: int):
        self.params = baselines.DLinearParams.init(lookback, horizon, seed, window)

    def named_parameters(self):
        return self.params.named_parameters()

    def forward_batch(self, xb):
        return baselines.dlinear_forward(xb, self.params)


class NaiveForecaster(Forecaster):
    kind = "naive"

    def __init__(self, horizon: int):
        self.horizon = horizon

    def forward_batch(self, xb):
        return baselines.naive_last(xb, self.horizon)


def build_forecaster(run: RunConfig, channels: int, resolved_periods: tuple[int, ...]) -> Forecaster:
    if run.model == "mppn":
        cfg = model.MPPNConfig(
            lookback=run.lookback, horizon=run.horizon, channels=channels, hidden=run.hidden,
            resolutions=run.resolutions, periods=resolved_periods, overlap=run.overlap,
            seed=run.seed)
        return MPPNForecaster(cfg)
    if run.model == "nlinear":
        return NLinearForecaster(run.lookback, run.horizon, run.seed)
    if run.model == "dlinear":
        return DLinearForecaster(run.lookback, run.horizon, run.seed, run.moving_average)
    return NaiveForecaster(run.horizon)


def restore_forecaster(run: RunConfig, extras: dict, tensors: dict[str, np.ndarray]) -> Forecaster:
    """Rebuild a forecaster from checkpoint contents, bit-exact."""
    fc = build_forecaster(run, int(extras["channels"]),
                          tuple(extras.get("resolved_periods") or ()))
    named = dict(fc.named_parameters())
    if set(named) != set(tensors):
        raise FormatError(
            f"checkpoint tensors {sorted(tensors)} do not match model parameters {sorted(named)}")
    for name, arr in tensors.items():
        if named[name].shape != arr.shape:
            raise FormatError(
                f"checkpoint tensor '{name}' has shape {arr.shape}, expected {named[name].shape}")
        named[name].data = np.ascontiguousarray(arr)
    return fc


# ---------------------------------------------------------------------------
# orchestration

def load_dataset(run: RunConfig) -> SeriesDataset:
    if not run.data:
        raise ConfigError("no data path configured")
    ds = load_csv(run.data, strict=not run.fill_missing, date_column=run.date_column)
    ds = chronological_split(ds, run.split_scheme)
    if ds.length < run.lookback + run.horizon:
        raise ConfigError(
            f"dataset length {ds.length} < lookback {run.lookback} + horizon {run.horizon}")
    return ds


def resolve_periods(run: RunConfig, train_std: np.ndarray) -> tuple[int, ...]:
    """Explicit override wins; otherwise mine the standardized training
    split so the test region never influences model geometry."""
    if run.periods:
        return tuple(run.periods)
    detected = detect_periods(train_std, run.top_k)
    usable = tuple(p for p in detected.periods if run.lookback // p >= 1)
    if not usable:
        raise ConfigError(
            f"all detected periods {detected.periods} exceed the lookback {run.lookback}; "
            f"pass an explicit period override")
    if len(usable) < len(detected.periods):
        log.warning("dropping detected periods > lookback: %s",
                    [p for p in detected.periods if p not in usable])
    return usable


def _split_mse(fc: Forecaster, values: np.ndarray, origins: np.ndarray, lookback: int,
               horizon: int, batch_size: int) -> float:
    acc = MetricsAccumulator()
    with T.no_grad():
        for inp, tgt, _ in iter_batches(values, origins, lookback, horizon, batch_size):
            acc.add(fc.forward_batch(Tensor(inp)), tgt)
    return acc.finalize().mse


class EarlyStopper:
    """Strict-improvement early stopping with best-state restoration."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad = 0

    def update(self, epoch: int, val: float) -> tuple[bool, bool]:
        """Returns (improved, stop)."""
        if val < self.best:
            self.best = val
            self.best_epoch = epoch
            self.bad = 0
            return True, False
        self.bad += 1
        return False, self.bad >= self.patience


@dataclass
class TrainResult:
    checkpoint_path: str
    log: list[dict]
    best_epoch: int
    best_val_mse: float | None
    periods: tuple[int, ...]


def train(run: RunConfig, out_path) -> TrainResult:
    """Shuffled mini-batch Adam with early stopping on validation MSE.

    The checkpoint always holds the best-validation parameters, not the
    last ones.  Everything downstream of (seed, config, data) is
    deterministic, including batch order.
    """
    ds = load_dataset(run)
    std = Standardizer.fit(ds.values[:ds.train_end], strict=not run.fill_missing)
    values = std.apply(ds.values)

    resolved: tuple[int, ...] = ()
    if run.model == "mppn":
        resolved = resolve_periods(run, values[:ds.train_end])
    fc = build_forecaster(run, ds.channels, resolved)

    params = [t for _, t in fc.named_parameters()]
    history: list[dict] = []
    best_epoch = 0
    best_val: float | None = None

    if params:
        train_origins = window_origins(ds, run.lookback, run.horizon, "train")
        val_origins = window_origins(ds, run.lookback, run.horizon, "val")
        opt = Adam(params, lr=run.lr, weight_decay=run.weight_decay)
        stopper = EarlyStopper(run.patience)
        snapshot = [p.data.copy() for p in params]
        for epoch in range(1, run.max_epochs + 1):
            perm = SplitMix64(derive(run.seed, "shuffle", epoch)).permutation(len(train_origins))
            shuffled = train_origins[perm]
            sq_sum = 0.0
            n_elem = 0
            for step, (inp, tgt, _) in enumerate(
                    iter_batches(values, shuffled, run.lookback, run.horizon, run.batch_size)):
                opt.zero_grad()
                out = fc.forward_batch(Tensor(inp))
                loss = T.mse_loss(out, Tensor(tgt))
                lv = float(loss.data)
                if not math.isfinite(lv):
                    raise DivergenceError(f"training loss non-finite at epoch {epoch}, step {step}")
                T.backward(loss)
                opt.step()
                sq_sum += lv * out.size
                n_elem += out.size
            val = _split_mse(fc, values, val_origins, run.lookback, run.horizon, run.batch_size)
            history.append({"epoch": epoch, "train_mse": sq_sum / n_elem, "val_mse": val})
            log.info("epoch %d: train %.6f val %.6f", epoch, sq_sum / n_elem, val)
            improved, stop = stopper.update(epoch, val)
            if improved:
                snapshot = [p.data.copy() for p in params]
            if stop:
                break
        for p, best_data in zip(params, snapshot):
            p.data = best_data
        best_epoch = stopper.best_epoch
        best_val = stopper.best if history else None

    extras = {
        "channels": ds.channels,
        "channel_names": list(ds.names),
        "resolved_periods": list(resolved),
    }
    save_checkpoint(out_path, config_blob(run, extras),
                    [(name, t.data) for name, t in fc.named_parameters()])
    return TrainResult(str(out_path), history, best_epoch, best_val, resolved)


def _open_checkpoint(ckpt_path, data_path=None):
    config_text, tensors = load_checkpoint(ckpt_path)
    run, extras = RunConfig.from_text(config_text)
    if data_path:
        run.data = str(data_path)
    ds = load_dataset(run)
    if ds.channels != int(extras["channels"]):
        raise ConfigError(
            f"dataset has {ds.channels} channels, checkpoint was trained on {extras['channels']}")
    std = Standardizer.fit(ds.values[:ds.train_end], strict=not run.fill_missing)
    fc = restore_forecaster(run, extras, tensors)
    return run, extras, ds, std, fc


def evaluate(ckpt_path, data_path=None, split: str = "test", batch_size: int | None = None):
    """Metrics over every window of a split, on the standardized scale."""
    run, _, ds, std, fc = _open_checkpoint(ckpt_path, data_path)
    values = std.apply(ds.values)
    origins = window_origins(ds, run.lookback, run.horizon, split)
    acc = MetricsAccumulator()
    with T.no_grad():
        for inp, tgt, _ in iter_batches(values, origins, run.lookback, run.horizon,
                                        batch_size or run.batch_size):
            acc.add(fc.forward_batch(Tensor(inp)), tgt)
    return acc.finalize()


def forecast(ckpt_path, data_path=None, origin: int | None = None, standardized: bool = False):
    """Predict one window; returns (values [H, C], names, origin index).

    The origin is the index of the first predicted step; it defaults to
    the first test-split origin.  Predictions are mapped back to the
    original scale unless ``standardized`` is set.
    """
    run, extras, ds, std, fc = _open_checkpoint(ckpt_path, data_path)
    values = std.apply(ds.values)
    if origin is None:
        origin = int(window_origins(ds, run.lookback, run.horizon, "test")[0])
    if not (run.lookback <= origin <= ds.length - run.horizon):
        raise ConfigError(
            f"origin {origin} outside [{run.lookback}, {ds.length - run.horizon}]")
    window = values[origin - run.lookback:origin]
    with T.no_grad():
        pred = fc.forward_batch(Tensor(window[None])).data[0]
    if not standardized:
        pred = std.invert(pred)
    return pred, extras["channel_names"], origin


def analyze(data_path, q_values, binning: str, top_k: int, periods_override,
            split_scheme: str, date_column: bool = True, fill_missing: bool = False) -> dict:
    """Predictability (raw series, optionally swept over Q) plus detected
    or overridden periods (standardized training split)."""
    ds = load_csv(data_path, strict=not fill_missing, date_column=date_column)

    q_list = list(q_values) if isinstance(q_values, (list, tuple)) else [int(q_values)]
    reports = [dataset_predictability(ds, q, binning).to_dict() for q in q_list]
    predict_part = reports[0] if len(reports) == 1 else {"sweep": reports}

    if periods_override:
        period_part = {
            "source": "override",
            "k": len(periods_override),
            "items": [{"period": int(p), "frequency": None, "amplitude": None}
                      for p in periods_override],
        }
    else:
        split_ds = chronological_split(ds, split_scheme)
        std = Standardizer.fit(split_ds.values[:split_ds.train_end], strict=False)
        pset = detect_periods(std.apply(split_ds.values[:split_ds.train_end]), top_k)
        period_part = {"source": "fft", **pset.to_dict()}

    return {"predictability": predict_part, "periods": period_part}


def export_gate_matrix(ckpt_path) -> tuple[list[str], np.ndarray]:
    """Channel names and the sigmoid gate matrix from an MPPN checkpoint."""
    config_text, tensors = load_checkpoint(ckpt_path)
    run, extras = RunConfig.from_text(config_text)
    if run.model != "mppn":
        raise ConfigError(f"gates: checkpoint holds a '{run.model}' model, not mppn")
    fc = restore_forecaster(run, extras, tensors)
    return list(extras["channel_names"]), model.export_gates(fc.params)
