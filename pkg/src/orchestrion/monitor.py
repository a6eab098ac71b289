"""Monitoring loop: scrapes host metrics, publishes monitoring results, keeps
the short-term series store, archives expired series to the registry, restarts
prematurely stopped containers with escalated targets, and paces the
optimization cycles for active containers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

from .bus import Action, Message, MessageBus, TOPIC_DEPLOY, TOPIC_ANALYZE
from .hostsim import HostSimulator, SimEvent, STATUS_KILLED_OOM
from .knowledge import Knowledge
from .model import OptimizationPolicy
from .registry import Registry, RegistryError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MonitorConfig:
    scrape_interval_s: int = 10
    retention_s: int = 7200
    max_attempts: int = 10

    def __post_init__(self) -> None:
        if self.scrape_interval_s <= 0 or self.retention_s <= 0 or self.max_attempts < 1:
            raise ValueError("monitor config values must be positive")


class MetricsStore:
    """Short-term per-container series, bounded by the retention window."""

    def __init__(self, retention_s: int) -> None:
        self.retention_s = retention_s
        self._series: dict[str, list[tuple[int, dict]]] = {}
        self._known: set[str] = set()

    def append(self, cid: str, t: int, row: dict) -> None:
        self._known.add(cid)
        self._series.setdefault(cid, []).append((t, row))

    def knows(self, cid: str) -> bool:
        return cid in self._known

    def series(self, cid: str) -> list[tuple[int, dict]]:
        return self._series.get(cid, [])

    def observed_max(self, cid: str, metric: str) -> float:
        rows = self._series.get(cid)
        if not rows:
            return 0.0
        return max(float(row[metric]) for _, row in rows)

    def last(self, cid: str) -> dict | None:
        rows = self._series.get(cid)
        return rows[-1][1] if rows else None

    def expire(self, now: int) -> dict[str, list]:
        """Drop points older than the retention window; returns what was dropped."""
        cutoff = now - self.retention_s
        expired: dict[str, list] = {}
        for cid, rows in self._series.items():
            split = 0
            while split < len(rows) and rows[split][0] < cutoff:
                split += 1
            if split:
                expired[cid] = [[t, row] for t, row in rows[:split]]
                self._series[cid] = rows[split:]
        return {cid: rows for cid, rows in expired.items() if rows}


class Monitor:
    """Drives the measure half of the control loop on one device."""

    def __init__(
        self,
        bus: MessageBus,
        host: HostSimulator,
        knowledge: Knowledge,
        registry: Registry,
        config: MonitorConfig,
        policy: OptimizationPolicy,
        emit,
    ) -> None:
        self.bus = bus
        self.host = host
        self.knowledge = knowledge
        self.registry = registry
        self.config = config
        self.policy = policy
        self.emit = emit
        self.metrics = MetricsStore(config.retention_s)
        self._cycle_seq = 0
        self.scrape_count = 0

    # -- per-tick driving --------------------------------------------------------

    def on_tick(self, t: int, events: list[SimEvent]) -> None:
        for event in events:
            self._handle_event(event)
        if t % self.config.scrape_interval_s == 0:
            self.scrape_and_publish()
            self.enforce_retention()
        self.schedule_optimization(t)

    # -- premature exits -----------------------------------------------------------

    def _handle_event(self, event: SimEvent) -> None:
        record = self.knowledge.containers.get(event.container_id)
        if event.kind == "stopped":
            self.knowledge.mark_dead(event.container_id, "stopped")
            return
        if event.kind != "oom_kill":
            return
        self.knowledge.mark_dead(event.container_id, STATUS_KILLED_OOM)
        if record is None:
            return
        deployment = self.knowledge.deployments.get(record.deployment_id)
        if deployment is None:
            return
        self.emit(
            {
                "type": "oom_kill",
                "container": event.container_id,
                "deployment": record.deployment_id,
                "attempt": record.attempt,
                "t": event.t,
                **event.detail,
            }
        )
        next_attempt = record.attempt + 1
        if next_attempt > self.config.max_attempts:
            deployment.state = "failed"
            deployment.max_attempts_hit = True
            self.emit(
                {
                    "type": "retry_exhausted",
                    "deployment": record.deployment_id,
                    "attempts": record.attempt,
                }
            )
            return
        self.bus.publish(
            TOPIC_DEPLOY,
            Message(
                action=Action.DEPLOYMENT_REQUEST,
                payload={
                    "deployment_id": record.deployment_id,
                    "owner": record.owner,
                    "image": record.image,
                    "attempt": next_attempt,
                    "retry": True,
                    "pinned_device": self.bus.device,
                },
                correlation_id=record.deployment_id,
            ),
        )

    # -- scraping ------------------------------------------------------------------

    def scrape_and_publish(self) -> None:
        sample = self.host.sample_metrics()
        self.scrape_count += 1
        containers_payload: dict[str, dict] = {}
        for cid, row in sample.containers.items():
            if row["status"] == "running":
                self.metrics.append(
                    cid,
                    sample.t,
                    {
                        "cpu_util": row["cpu_util"],
                        "mem_util": row["mem_util"],
                        "throttle_pct": row["throttle_pct"],
                    },
                )
            containers_payload[cid] = dict(row)
        self.bus.publish(
            "monitor",
            Message(
                action=Action.MONITORING_RESULT,
                payload={
                    "device": self.bus.device,
                    "t": sample.t,
                    "containers": containers_payload,
                    "avail": {"cpu": sample.avail_cpu, "mem": sample.avail_mem},
                },
            ),
        )

    # -- retention / archival --------------------------------------------------------

    def enforce_retention(self) -> str | None:
        """Archive and truncate series older than the retention window."""
        expired = self.metrics.expire(self.host.now)
        if not expired:
            return None
        try:
            digest = self.registry.archive_metrics(self.bus.device, expired)
        except RegistryError:
            logger.warning("metrics archive failed; will retry next cycle")
            # put the points back so nothing is lost
            for cid, rows in expired.items():
                existing = self.metrics._series.get(cid, [])
                self.metrics._series[cid] = [(t, row) for t, row in rows] + existing
            return None
        self.emit({"type": "metrics_archived", "hash": digest, "containers": sorted(expired)})
        return digest

    # -- optimization cadence ----------------------------------------------------------

    def schedule_optimization(self, t: int) -> None:
        due = []
        for record in self.knowledge.active():
            age = t - record.start_t
            warmup = self.policy.warmup_delay_s
            if age >= warmup and (age - warmup) % self.policy.optimization_interval_s == 0:
                due.append(record)
        if not due:
            return
        self._cycle_seq += 1
        for index, record in enumerate(due):
            self.bus.publish(
                TOPIC_ANALYZE,
                Message(
                    action=Action.DEPLOYMENT_OPTIMIZATION_REQUEST,
                    payload={
                        "cycle": self._cycle_seq,
                        "index": index,
                        "count": len(due),
                        "container": record.container_id,
                    },
                    correlation_id=f"cycle-{self._cycle_seq}@{self.bus.device}",
                ),
            )
