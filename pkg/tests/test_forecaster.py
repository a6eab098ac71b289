import pytest

from orchestrion.bus import Action, EventSpine, Message, MessageBus
from orchestrion.forecaster import (
    ForecastConfig,
    Forecaster,
    aggregate_buckets,
    ar_forecast,
    clip_series,
)
from orchestrion.monitor import MetricsStore


class TestAggregation:
    def test_hour_of_constant_samples_is_one_point(self):
        points = [(t, 50.0) for t in range(3600)]
        assert aggregate_buckets(points, 3600) == [50.0]

    def test_alternating_hour_averages(self):
        points = [(t, 0.0 if t % 2 == 0 else 100.0) for t in range(3600)]
        assert aggregate_buckets(points, 3600) == [50.0]

    def test_ninety_minutes_gives_two_points(self):
        points = [(t, 10.0) for t in range(0, 5400, 10)]
        assert len(aggregate_buckets(points, 3600)) == 2

    def test_empty_series_errors(self):
        with pytest.raises(ValueError):
            aggregate_buckets([], 60)

    def test_non_monotone_errors(self):
        with pytest.raises(ValueError):
            aggregate_buckets([(10, 1.0), (5, 2.0)], 60)

    def test_bucket_means(self):
        points = [(0, 10.0), (30, 20.0), (60, 40.0)]
        assert aggregate_buckets(points, 60) == [15.0, 40.0]


class TestForecast:
    def test_constant_series_fixpoint(self):
        forecast, fallback = ar_forecast([80.0] * 12, horizon=3)
        assert forecast == [80.0, 80.0, 80.0]
        assert not fallback

    def test_linear_ramp_extrapolates(self):
        series = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0]
        forecast, fallback = ar_forecast(series, horizon=2)
        assert forecast[0] == pytest.approx(110.0, abs=1e-9)
        assert forecast[1] == pytest.approx(120.0, abs=1e-9)
        assert not fallback

    def test_short_history_falls_back_to_last_value(self):
        forecast, fallback = ar_forecast([5.0, 6.0, 7.0, 8.0], horizon=4)
        assert forecast == [8.0] * 4
        assert fallback

    def test_horizon_length_exact(self):
        for horizon in (1, 3, 8):
            forecast, _ = ar_forecast([1.0, 4.0, 2.0, 8.0, 5.0, 7.0, 3.0, 6.0, 9.0, 2.0], horizon)
            assert len(forecast) == horizon

    def test_shift_invariance(self):
        series = [3.0, 7.0, 4.0, 9.0, 6.0, 8.0, 5.0, 10.0, 7.0, 11.0, 6.0]
        base, _ = ar_forecast(series, horizon=4)
        shifted, _ = ar_forecast([v + 100.0 for v in series], horizon=4)
        for a, b in zip(base, shifted):
            assert b - a == pytest.approx(100.0, abs=1e-6)

    def test_empty_and_bad_horizon_rejected(self):
        with pytest.raises(ValueError):
            ar_forecast([], 1)
        with pytest.raises(ValueError):
            ar_forecast([1.0, 2.0], 0)

    def test_clip_series(self):
        assert clip_series([-5.0, 50.0, 120.0], lo=0.0, hi=100.0) == [0.0, 50.0, 100.0]


def build_service(bucket_s=60):
    spine = EventSpine()
    bus = MessageBus("10.0.0.1", spine)
    store = MetricsStore(retention_s=100_000)
    service = Forecaster(bus, store, ForecastConfig(horizon=3, bucket_s=bucket_s))
    return spine, bus, store, service


class TestForecastService:
    def fill(self, store, cid, values):
        for i, value in enumerate(values):
            store.append(cid, i * 10, {"cpu_util": value, "mem_util": value, "throttle_pct": 0.0})

    def test_response_has_one_entry_per_container(self):
        spine, bus, store, _ = build_service()
        self.fill(store, "c1", [50.0] * 60)
        self.fill(store, "c2", [30.0] * 60)
        replies = bus.subscribe("forecast")
        bus.publish(
            "forecast",
            Message(
                action=Action.FORECAST_REQUEST,
                payload={"containers": ["c1", "c2"], "horizon": 3},
                correlation_id="fc-1",
            ),
        )
        spine.drain()
        responses = [m for m in replies.pop_all() if m.action is Action.FORECAST_RESPONSE]
        assert len(responses) == 1
        results = responses[0].payload["results"]
        assert set(results) == {"c1", "c2"}

    def test_correlation_id_echoed_and_ordered_after_request(self):
        spine, bus, store, _ = build_service()
        self.fill(store, "c1", [10.0] * 30)
        watcher = bus.subscribe("forecast")
        bus.publish(
            "forecast",
            Message(action=Action.FORECAST_REQUEST, payload={"containers": ["c1"]}, correlation_id="fc-42"),
        )
        spine.drain()
        actions = [m.action for m in watcher.pop_all()]
        assert actions == [Action.FORECAST_REQUEST, Action.FORECAST_RESPONSE]
        response = [e for e in bus.spine.log if e["action"] == "forecast_response"][-1]
        assert response["correlation_id"] == "fc-42"

    def test_unknown_container_gets_error_entry(self):
        spine, bus, store, service = build_service()
        self.fill(store, "c1", [10.0] * 30)
        result = service.forecast_container("ghost", 3)
        assert result.error == "unknown container"

    def test_throttle_clipped_to_percent_range(self):
        spine, bus, store, service = build_service(bucket_s=10)
        for i in range(20):
            store.append("c1", i * 10, {"cpu_util": 1.0, "mem_util": 1.0, "throttle_pct": min(100.0, 60.0 + 5 * i)})
        result = service.forecast_container("c1", 5)
        assert all(0.0 <= v <= 100.0 for v in result.throttle_pct)
        assert all(v >= 0.0 for v in result.cpu_util)

    def test_fallback_flag_on_short_series(self):
        spine, bus, store, service = build_service(bucket_s=1000)
        self.fill(store, "c1", [10.0, 20.0])
        result = service.forecast_container("c1", 2)
        assert result.fallback
