from orchestrion.bus import Action, EventSpine, MessageBus
from orchestrion.hostsim import HostConfig, HostSimulator, WorkloadSpec
from orchestrion.knowledge import ContainerRecord, DeploymentRecord, Knowledge
from orchestrion.model import Limits, OptimizationPolicy
from orchestrion.monitor import Monitor, MonitorConfig
from orchestrion.registry import Registry


def build_stack(policy=None, config=None):
    spine = EventSpine()
    bus = MessageBus("10.0.0.1", spine)
    host = HostSimulator(HostConfig(), device="10.0.0.1")
    knowledge = Knowledge()
    registry = Registry()
    events = []
    monitor = Monitor(
        bus,
        host,
        knowledge,
        registry,
        config or MonitorConfig(scrape_interval_s=10, retention_s=7200, max_attempts=3),
        policy or OptimizationPolicy(warmup_delay_s=50, optimization_interval_s=30),
        events.append,
    )
    return spine, bus, host, knowledge, registry, monitor, events


def register(knowledge, host, cid, deployment="d1", attempt=1, image="memory-3"):
    spec = WorkloadSpec(pattern=3, workload_class="mem", period_s=1800, peak=95)
    knowledge.register_container(
        ContainerRecord(
            container_id=cid,
            deployment_id=deployment,
            owner="vendor",
            image=image,
            spec=spec,
            limits=Limits(cpu=100, mem=150),
            start_t=host.now,
            attempt=attempt,
            order=knowledge.next_order(),
        )
    )
    if deployment not in knowledge.deployments:
        knowledge.deployments[deployment] = DeploymentRecord(deployment, "vendor", image)


class TestScraping:
    def test_series_length_matches_scrape_count(self):
        spine, bus, host, knowledge, registry, monitor, _ = build_stack()
        spec = WorkloadSpec(pattern=3, workload_class="mem", period_s=1800, peak=95)
        cid = host.run_container(spec, Limits(cpu=100, mem=150))
        register(knowledge, host, cid)
        for t in range(1, 51):
            events = host.tick()
            monitor.on_tick(t, events)
        spine.drain()
        assert len(monitor.metrics.series(cid)) == 5

    def test_empty_host_result_carries_full_availability(self):
        spine, bus, host, knowledge, registry, monitor, _ = build_stack()
        results = bus.subscribe("monitor")
        for t in range(1, 11):
            monitor.on_tick(t, host.tick())
        spine.drain()
        (message,) = results.pop_all()
        assert message.payload["avail"] == {"cpu": 1000, "mem": 1000}
        assert message.payload["containers"] == {}


class TestRetention:
    def test_expired_chunk_archived_and_round_trips(self):
        spine, bus, host, knowledge, registry, monitor, events = build_stack(
            config=MonitorConfig(scrape_interval_s=10, retention_s=24 * 3600, max_attempts=3)
        )
        for hour in range(25):  # 25h of hourly points
            monitor.metrics.append("c1", hour * 3600, {"cpu_util": hour, "mem_util": 1, "throttle_pct": 0.0})
        host.now = 25 * 3600
        digest = monitor.enforce_retention()
        assert digest is not None
        archived = registry.fetch_metrics(digest)
        assert list(archived) == ["c1"]
        assert len(archived["c1"]) == 1  # exactly the oldest hour fell out
        assert archived["c1"][0][0] == 0
        assert registry.archived_hashes("10.0.0.1") == [digest]

    def test_young_data_is_noop(self):
        spine, bus, host, knowledge, registry, monitor, _ = build_stack()
        monitor.metrics.append("c1", 100, {"cpu_util": 1, "mem_util": 1, "throttle_pct": 0.0})
        host.now = 200
        assert monitor.enforce_retention() is None

    def test_second_enforcement_without_new_data_is_noop(self):
        spine, bus, host, knowledge, registry, monitor, _ = build_stack(
            config=MonitorConfig(scrape_interval_s=10, retention_s=100, max_attempts=3)
        )
        monitor.metrics.append("c1", 0, {"cpu_util": 1, "mem_util": 1, "throttle_pct": 0.0})
        monitor.metrics.append("c1", 150, {"cpu_util": 2, "mem_util": 1, "throttle_pct": 0.0})
        host.now = 160
        assert monitor.enforce_retention() is not None
        assert monitor.enforce_retention() is None


class TestPrematureExitRetries:
    def run_until_kill(self, monitor, host, limit_mem=10):
        spec = WorkloadSpec(pattern=3, workload_class="mem", period_s=1800, peak=95)
        cid = host.run_container(spec, Limits(cpu=100, mem=limit_mem))
        return cid

    def test_oom_triggers_retry_request(self):
        spine, bus, host, knowledge, registry, monitor, events = build_stack()
        requests = bus.subscribe("deploy")
        cid = self.run_until_kill(monitor, host)
        register(knowledge, host, cid, attempt=1)
        for t in range(1, 4):
            monitor.on_tick(t, host.tick())
        spine.drain()
        retry = [m for m in requests.pop_all() if m.action is Action.DEPLOYMENT_REQUEST]
        assert len(retry) == 1
        assert retry[0].payload["attempt"] == 2
        assert retry[0].payload["retry"] is True
        assert retry[0].payload["pinned_device"] == "10.0.0.1"

    def test_exhausted_attempts_give_up(self):
        spine, bus, host, knowledge, registry, monitor, events = build_stack()
        requests = bus.subscribe("deploy")
        cid = self.run_until_kill(monitor, host)
        register(knowledge, host, cid, attempt=3)  # max_attempts=3 in the stack
        for t in range(1, 4):
            monitor.on_tick(t, host.tick())
        spine.drain()
        assert [m for m in requests.pop_all() if m.action is Action.DEPLOYMENT_REQUEST] == []
        assert any(e["type"] == "retry_exhausted" for e in events)
        assert knowledge.deployments["d1"].state == "failed"

    def test_orchestrated_stop_not_retried(self):
        spine, bus, host, knowledge, registry, monitor, events = build_stack()
        requests = bus.subscribe("deploy")
        spec = WorkloadSpec(pattern=3, workload_class="mem", period_s=1800, peak=95)
        cid = host.run_container(spec, Limits(cpu=100, mem=150))
        register(knowledge, host, cid)
        monitor.on_tick(1, host.tick())
        host.stop_container(cid)
        monitor.on_tick(2, [])
        spine.drain()
        assert [m for m in requests.pop_all() if m.action is Action.DEPLOYMENT_REQUEST] == []


class TestOptimizationCadence:
    def collect_requests(self, ticks, warmup=50, interval=30):
        spine, bus, host, knowledge, registry, monitor, _ = build_stack(
            policy=OptimizationPolicy(warmup_delay_s=warmup, optimization_interval_s=interval)
        )
        inbox = bus.subscribe("analyze")
        spec = WorkloadSpec(pattern=3, workload_class="mem", period_s=1800, peak=95)
        cid = host.run_container(spec, Limits(cpu=100, mem=150))
        register(knowledge, host, cid)
        sent = []
        for t in range(1, ticks + 1):
            monitor.on_tick(t, host.tick())
            spine.drain()
            for m in inbox.pop_all():
                if m.action is Action.DEPLOYMENT_OPTIMIZATION_REQUEST:
                    sent.append((t, m.payload))
        return sent

    def test_no_requests_before_warmup(self):
        assert self.collect_requests(ticks=49) == []

    def test_kth_request_at_warmup_plus_k_intervals(self):
        sent = self.collect_requests(ticks=140)
        assert [t for t, _ in sent] == [50, 80, 110, 140]
        assert [p["cycle"] for _, p in sent] == [1, 2, 3, 4]

    def test_no_active_containers_no_requests(self):
        spine, bus, host, knowledge, registry, monitor, _ = build_stack()
        inbox = bus.subscribe("analyze")
        for t in range(1, 200):
            monitor.on_tick(t, host.tick())
        spine.drain()
        assert inbox.pop_all() == []

    def test_batch_carries_index_and_count(self):
        spine, bus, host, knowledge, registry, monitor, _ = build_stack(
            policy=OptimizationPolicy(warmup_delay_s=10, optimization_interval_s=30)
        )
        inbox = bus.subscribe("analyze")
        spec = WorkloadSpec(pattern=3, workload_class="mem", period_s=1800, peak=95)
        for i in range(2):
            cid = host.run_container(spec, Limits(cpu=100, mem=150))
            register(knowledge, host, cid, deployment=f"d{i}")
        for t in range(1, 11):
            monitor.on_tick(t, host.tick())
        spine.drain()
        batch = [m.payload for m in inbox.pop_all() if m.action is Action.DEPLOYMENT_OPTIMIZATION_REQUEST]
        assert [(p["index"], p["count"]) for p in batch] == [(0, 2), (1, 2)]
