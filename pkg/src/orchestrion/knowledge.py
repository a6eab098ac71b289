"""Shared per-device state the control-loop components coordinate over:
which containers run with which limits, and how each deployment has fared.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .hostsim import WorkloadSpec
from .model import Limits


@dataclass
class ContainerRecord:
    container_id: str
    deployment_id: str
    owner: str
    image: str
    spec: WorkloadSpec
    limits: Limits
    start_t: int
    attempt: int
    order: int
    status: str = "running"


@dataclass
class DeploymentRecord:
    deployment_id: str
    owner: str
    image: str
    requester: str = ""
    state: str = "pending"  # pending|analyzing|running|rejected|failed|delegated
    attempts: int = 0
    max_attempts_hit: bool = False
    decisions: list = field(default_factory=list)
    containers: list = field(default_factory=list)
    executor: str = ""
    detail: str = ""


class Knowledge:
    """Registry of deployments and containers on one device."""

    def __init__(self) -> None:
        self.containers: dict[str, ContainerRecord] = {}
        self.deployments: dict[str, DeploymentRecord] = {}
        self._order = 0

    def register_container(self, record: ContainerRecord) -> None:
        self.containers[record.container_id] = record

    def next_order(self) -> int:
        self._order += 1
        return self._order

    def active(self) -> list[ContainerRecord]:
        """Running containers in deployment order (oldest first)."""
        return sorted(
            (c for c in self.containers.values() if c.status == "running"),
            key=lambda c: c.order,
        )

    def mark_dead(self, cid: str, status: str) -> None:
        rec = self.containers.get(cid)
        if rec is not None:
            rec.status = status

    def set_limits(self, cid: str, limits: Limits) -> None:
        rec = self.containers.get(cid)
        if rec is not None:
            rec.limits = limits

    def deployment(self, deployment_id: str) -> DeploymentRecord:
        return self.deployments[deployment_id]
