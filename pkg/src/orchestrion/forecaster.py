"""Time-series forecasting service: bucket aggregation plus an order-(5,1,0)
autoregressive integrated model fit by ordinary least squares.

The series is differenced once, an AR(5) is fit on the lagged differences
(no drift term, the standard choice once differencing removes the level),
forecasts are iterated step by step and integrated back from the last
observed value. Short histories fall back to repeating the last observation;
an exactly linear history degenerates to constant drift.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bus import Action, Message, MessageBus, TOPIC_FORECAST

logger = logging.getLogger(__name__)

AR_ORDER = 5
DIFF_ORDER = 1


@dataclass(frozen=True)
class ForecastConfig:
    ar_order: int = AR_ORDER
    diff_order: int = DIFF_ORDER
    horizon: int = 1
    min_points: int = AR_ORDER + DIFF_ORDER + 1
    bucket_s: int = 3600

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.min_points < self.ar_order + self.diff_order + 1:
            raise ValueError("min_points too small for the model order")
        if self.bucket_s <= 0:
            raise ValueError("bucket_s must be positive")


def aggregate_buckets(points: list[tuple[int, float]], bucket_s: int) -> list[float]:
    """Mean per bucket of ``bucket_s`` seconds; a partial trailing bucket is
    included as its own point. Timestamps must be non-decreasing."""
    if not points:
        raise ValueError("cannot aggregate an empty series")
    t0 = points[0][0]
    last_t = t0
    sums: list[float] = []
    counts: list[int] = []
    for t, value in points:
        if t < last_t:
            raise ValueError("series timestamps must be monotone")
        last_t = t
        idx = (t - t0) // bucket_s
        while len(sums) <= idx:
            sums.append(0.0)
            counts.append(0)
        sums[idx] += float(value)
        counts[idx] += 1
    return [s / c for s, c in zip(sums, counts) if c > 0]


def ar_forecast(values: list[float], horizon: int, config: ForecastConfig | None = None) -> tuple[list[float], bool]:
    """Forecast ``horizon`` future points; returns (forecast, used_fallback).

    Fallback (too little history) repeats the last observed value. A
    differenced series with zero variance yields a pure drift forecast.
    """
    config = config or ForecastConfig()
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not values:
        raise ValueError("cannot forecast from an empty series")
    y = np.asarray(values, dtype=float)
    if y.size < config.min_points:
        return [float(y[-1])] * horizon, True

    z = np.diff(y, n=config.diff_order)
    if np.ptp(z) == 0.0:
        step = float(z.mean()) if z.size else 0.0
        return [float(y[-1] + step * (k + 1)) for k in range(horizon)], False

    p = config.ar_order
    rows = z.size - p
    design = np.empty((rows, p), dtype=float)
    for lag in range(1, p + 1):
        design[:, lag - 1] = z[p - lag:z.size - lag]
    target = z[p:]
    # modest rcond keeps near-singular fits (short or low-variance histories)
    # from amplifying float noise into the iterated forecast
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=1e-8)

    history = list(z[-p:][::-1])  # most recent difference first
    level = float(y[-1])
    out: list[float] = []
    for _ in range(horizon):
        step = float(np.dot(coeffs, history))
        level += step
        out.append(level)
        history = [step] + history[:-1]
    return out, False


def clip_series(values: list[float], lo: float | None = 0.0, hi: float | None = None) -> list[float]:
    out = []
    for v in values:
        if lo is not None:
            v = max(v, lo)
        if hi is not None:
            v = min(v, hi)
        out.append(float(v))
    return out


@dataclass
class ForecastResult:
    """Per-container forecast slice: predicted utilization and throttling."""

    cpu_util: list[float] = field(default_factory=list)
    mem_util: list[float] = field(default_factory=list)
    throttle_pct: list[float] = field(default_factory=list)
    fallback: bool = False
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "cpu_util": self.cpu_util,
            "mem_util": self.mem_util,
            "throttle_pct": self.throttle_pct,
            "fallback": self.fallback,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForecastResult":
        return cls(
            cpu_util=list(data.get("cpu_util", [])),
            mem_util=list(data.get("mem_util", [])),
            throttle_pct=list(data.get("throttle_pct", [])),
            fallback=bool(data.get("fallback", False)),
            error=data.get("error"),
        )


class Forecaster:
    """Answers forecast requests on the forecast topic.

    Stateless per request: series are pulled from the monitor's local store,
    aggregated into buckets and forecast per metric. Unknown containers get
    per-container error entries; the response is still sent.
    """

    def __init__(self, bus: MessageBus, metrics_store, config: ForecastConfig) -> None:
        self.bus = bus
        self.store = metrics_store
        self.config = config
        bus.subscribe(TOPIC_FORECAST, self._on_message)

    def _on_message(self, topic: str, msg: Message) -> None:
        if msg.action is not Action.FORECAST_REQUEST:
            return
        horizon = int(msg.payload.get("horizon") or self.config.horizon)
        results: dict[str, dict] = {}
        for cid in msg.payload.get("containers", []):
            results[cid] = self.forecast_container(cid, horizon).as_dict()
        self.bus.publish(
            TOPIC_FORECAST,
            Message(
                action=Action.FORECAST_RESPONSE,
                payload={"results": results, "horizon": horizon},
                correlation_id=msg.correlation_id,
            ),
        )

    def forecast_container(self, cid: str, horizon: int) -> ForecastResult:
        series = self.store.series(cid) if self.store.knows(cid) else None
        if series is None:
            return ForecastResult(error="unknown container")
        if not series:
            return ForecastResult(error="no samples")
        result = ForecastResult()
        for metric, (lo, hi) in (("cpu_util", (0.0, None)), ("mem_util", (0.0, None)), ("throttle_pct", (0.0, 100.0))):
            points = [(t, row[metric]) for t, row in series]
            buckets = aggregate_buckets(points, self.config.bucket_s)
            forecast, fell_back = ar_forecast(buckets, horizon, self.config)
            result.fallback = result.fallback or fell_back
            setattr(result, metric, clip_series(forecast, lo, hi))
        return result
