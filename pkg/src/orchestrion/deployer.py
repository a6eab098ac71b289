"""Deployment front door and executor.

Accepts external deployment requests (a direct-call stand-in for the REST
ingress), resolves images through the registry, drives the request-then-base
fallback against the analyzer, executes accepted deployments on the host, and
applies optimization updates. With cluster bridging enabled it also tracks
every device's availability and runs the deterministic executor election:
all deployers rank the same table the same way, and only the winner proceeds.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass

from .bus import Action, CLUSTER_PREFIX, Message, MessageBus, TOPIC_DEPLOY, TOPIC_ANALYZE, TOPIC_MONITOR
from .hostsim import HostSimulator, WorkloadSpec
from .knowledge import ContainerRecord, DeploymentRecord, Knowledge
from .model import DeviceId, Limits, OptimizationPolicy
from .registry import NotFound, Registry, RegistryError, TamperError

logger = logging.getLogger(__name__)

ROLE_REQUEST = "request"
ROLE_BASE = "base"
ROLE_ESCALATED = "escalated"


def dominant_resource(request_cpu: int, request_mem: int, host_cpu: int, host_mem: int) -> str:
    """The resource a request leans on hardest, relative to host capacity."""
    cpu_share = request_cpu / host_cpu if host_cpu else 0.0
    mem_share = request_mem / host_mem if host_mem else 0.0
    return "mem" if mem_share >= cpu_share else "cpu"


def select_executor(table: dict[str, dict], dominant: str, self_device: str) -> str:
    """Deterministic executor election over the availability table.

    Highest availability of the dominant resource wins; ties fall to the
    other resource, then to the numerically smallest device address. An empty
    table elects the local device.
    """
    if not table:
        return self_device
    other = "mem" if dominant == "cpu" else "cpu"
    ranked = sorted(
        table.items(),
        key=lambda item: (-item[1][dominant], -item[1][other], DeviceId(address=item[0]).sort_key),
    )
    return ranked[0][0]


@dataclass
class _Admission:
    deployment_id: str
    attempt: int
    role: str
    target: Limits
    spec: WorkloadSpec
    analysis_id: str = ""


class Deployer:
    """One device's deployment executor; admissions run strictly one at a time."""

    def __init__(
        self,
        bus: MessageBus,
        registry: Registry,
        host: HostSimulator,
        knowledge: Knowledge,
        policy: OptimizationPolicy,
        emit,
        cluster_mode: bool = False,
    ) -> None:
        self.bus = bus
        self.registry = registry
        self.host = host
        self.knowledge = knowledge
        self.policy = policy
        self.emit = emit
        self.cluster_mode = cluster_mode
        self.table: dict[str, dict] = {}
        self._queue: deque[dict] = deque()
        self._active: _Admission | None = None
        self._resolved_analysis: set[str] = set()
        self._request_seq = 0
        self._analysis_seq = 0
        bus.subscribe(TOPIC_DEPLOY, self._on_deploy)
        bus.subscribe(TOPIC_MONITOR, self._on_monitoring)
        if cluster_mode:
            bus.subscribe(CLUSTER_PREFIX + TOPIC_DEPLOY, self._on_deploy)
            bus.subscribe(CLUSTER_PREFIX + TOPIC_MONITOR, self._on_monitoring)

    # -- ingress (REST stand-in) ---------------------------------------------------

    def submit(self, request: dict) -> dict:
        """POST /deploy equivalent; body: {"owner": ..., "image": ..., "requester": ...}."""
        owner = request["owner"]
        image = request["image"]
        self._request_seq += 1
        deployment_id = f"d{self._request_seq:03d}@{self.bus.device}"
        self.knowledge.deployments[deployment_id] = DeploymentRecord(
            deployment_id=deployment_id,
            owner=owner,
            image=image,
            requester=request.get("requester", ""),
        )
        self.bus.publish(
            TOPIC_DEPLOY,
            Message(
                action=Action.DEPLOYMENT_REQUEST,
                payload={"deployment_id": deployment_id, "owner": owner, "image": image, "attempt": 1},
                correlation_id=deployment_id,
            ),
        )
        return {"request_id": deployment_id}

    def deployment_status(self, deployment_id: str) -> dict:
        """GET /deployments/<id> equivalent."""
        record = self.knowledge.deployments.get(deployment_id)
        if record is None:
            return {"request_id": deployment_id, "state": "unknown"}
        return {
            "request_id": deployment_id,
            "state": record.state,
            "attempts": record.attempts,
            "decisions": list(record.decisions),
            "containers": list(record.containers),
            "executor": record.executor,
            "detail": record.detail,
        }

    # -- message handling -------------------------------------------------------------

    def _on_deploy(self, topic: str, msg: Message) -> None:
        handlers = {
            Action.DEPLOYMENT_REQUEST: self._on_request,
            Action.DEPLOYMENT_ACCEPT: self._on_verdict,
            Action.DEPLOYMENT_CANCEL: self._on_verdict,
            Action.DEPLOYMENT_UPDATE: self._on_update,
        }
        handler = handlers.get(msg.action)
        if handler is not None:
            handler(topic, msg)

    def _on_monitoring(self, topic: str, msg: Message) -> None:
        if msg.action is not Action.MONITORING_RESULT:
            return
        payload = msg.payload
        device = payload["device"]
        entry = self.table.get(device)
        if entry is not None and payload["t"] < entry["t"]:
            return  # stale, out-of-order result
        self.table[device] = {
            "cpu": payload["avail"]["cpu"],
            "mem": payload["avail"]["mem"],
            "t": payload["t"],
        }

    # -- deployment requests --------------------------------------------------------------

    def _on_request(self, topic: str, msg: Message) -> None:
        payload = msg.payload
        deployment_id = payload["deployment_id"]
        attempt = int(payload.get("attempt", 1))
        pinned = payload.get("pinned_device")
        if pinned is not None:
            if pinned != self.bus.device:
                return
        elif self.cluster_mode:
            try:
                record = self.registry.get_image(payload["owner"], payload["image"])
            except RegistryError:
                record = None
            dominant = "mem"
            if record is not None:
                dominant = dominant_resource(
                    record.request_limit_cpu,
                    record.request_limit_memory,
                    self.host.config.cpu_total,
                    self.host.config.mem_total,
                )
            winner = select_executor(self.table, dominant, self.bus.device)
            self.emit(
                {
                    "type": "cluster_select",
                    "deployment": deployment_id,
                    "winner": winner,
                    "dominant": dominant,
                    "table": {d: {"cpu": e["cpu"], "mem": e["mem"]} for d, e in sorted(self.table.items())},
                }
            )
            if winner != self.bus.device:
                local = self.knowledge.deployments.get(deployment_id)
                if local is not None:
                    local.state = "delegated"
                    local.executor = winner
                return
        if deployment_id not in self.knowledge.deployments:
            self.knowledge.deployments[deployment_id] = DeploymentRecord(
                deployment_id=deployment_id,
                owner=payload["owner"],
                image=payload["image"],
            )
        self._queue.append({"deployment_id": deployment_id, "attempt": attempt})
        self._pump()

    def _pump(self) -> None:
        while self._active is None and self._queue:
            work = self._queue.popleft()
            self._start_admission(work["deployment_id"], work["attempt"])

    def _start_admission(self, deployment_id: str, attempt: int) -> None:
        record = self.knowledge.deployments[deployment_id]
        record.executor = self.bus.device
        try:
            image = self.registry.get_image(record.owner, record.image)
            blob = self.registry.fetch_blob(image.image_hash)
        except NotFound as exc:
            record.state = "rejected"
            record.detail = f"image not found: {exc}"
            self.emit({"type": "deployment_rejected", "deployment": deployment_id, "reason": "image_not_found"})
            return
        except TamperError as exc:
            record.state = "rejected"
            record.detail = f"image verification failed: {exc}"
            self.emit({"type": "deployment_rejected", "deployment": deployment_id, "reason": "image_tampered"})
            return
        spec = WorkloadSpec.from_dict(json.loads(blob.layers[0].decode("utf-8"))["workload"])
        role, target = self._target_for_attempt(image, attempt)
        record.state = "analyzing"
        record.attempts = max(record.attempts, attempt)
        self._active = _Admission(
            deployment_id=deployment_id, attempt=attempt, role=role, target=target, spec=spec
        )
        self._publish_analysis()

    def _target_for_attempt(self, image, attempt: int) -> tuple[str, Limits]:
        request = Limits(cpu=image.request_limit_cpu, mem=image.request_limit_memory)
        base = Limits(cpu=image.base_limit_cpu, mem=image.base_limit_memory)
        if attempt <= 1:
            return ROLE_REQUEST, request
        if attempt == 2:
            return ROLE_BASE, base
        escalated_mem = min(base.mem + (attempt - 2) * self.policy.scale_up.mem, self.policy.mem_max)
        return ROLE_ESCALATED, Limits(cpu=base.cpu, mem=escalated_mem)

    def _publish_analysis(self) -> None:
        assert self._active is not None
        admission = self._active
        self._analysis_seq += 1
        admission.analysis_id = f"a{self._analysis_seq:04d}@{self.bus.device}"
        self.bus.publish(
            TOPIC_ANALYZE,
            Message(
                action=Action.DEPLOYMENT_ANALYSIS_REQUEST,
                payload={
                    "deployment_id": admission.deployment_id,
                    "analysis_id": admission.analysis_id,
                    "target": admission.target.as_dict(),
                    "role": admission.role,
                    "attempt": admission.attempt,
                },
                correlation_id=admission.analysis_id,
            ),
        )

    # -- verdicts --------------------------------------------------------------------------

    def _on_verdict(self, topic: str, msg: Message) -> None:
        analysis_id = msg.payload.get("analysis_id", "")
        if analysis_id in self._resolved_analysis:
            return  # idempotence: verdict for an already settled analysis
        admission = self._active
        if admission is None or admission.analysis_id != analysis_id:
            return
        self._resolved_analysis.add(analysis_id)
        record = self.knowledge.deployments[admission.deployment_id]
        record.decisions.append(
            {
                "verdict": "accept" if msg.action is Action.DEPLOYMENT_ACCEPT else "reject",
                "role": admission.role,
                "attempt": admission.attempt,
                "target": admission.target.as_dict(),
            }
        )
        if msg.action is Action.DEPLOYMENT_ACCEPT:
            self._execute(admission, record)
        else:
            self._handle_cancel(admission, record)

    def _handle_cancel(self, admission: _Admission, record: DeploymentRecord) -> None:
        if admission.role == ROLE_REQUEST:
            # second analysis with the vendor's base limits
            image = self.registry.get_image(record.owner, record.image)
            admission.role = ROLE_BASE
            admission.target = Limits(cpu=image.base_limit_cpu, mem=image.base_limit_memory)
            self._publish_analysis()
            return
        record.state = "failed" if admission.attempt > 1 else "rejected"
        record.detail = "no acceptable resource limits"
        self.emit(
            {
                "type": "deployment_rejected",
                "deployment": admission.deployment_id,
                "attempt": admission.attempt,
                "reason": "analysis_cancelled",
            }
        )
        self._active = None
        self._pump()

    def _execute(self, admission: _Admission, record: DeploymentRecord) -> None:
        try:
            cid = self.host.run_container(admission.spec, admission.target, restart_count=admission.attempt - 1)
        except ValueError as exc:
            logger.warning("execution failed for %s: %s", admission.deployment_id, exc)
            self.bus.publish(
                TOPIC_DEPLOY,
                Message(
                    action=Action.DEPLOYMENT_CANCEL,
                    payload={
                        "deployment_id": admission.deployment_id,
                        "analysis_id": admission.analysis_id + ":exec",
                        "reason": f"execution failed: {exc}",
                    },
                    correlation_id=admission.analysis_id,
                ),
            )
            record.state = "failed"
            self._active = None
            self._pump()
            return
        self.knowledge.register_container(
            ContainerRecord(
                container_id=cid,
                deployment_id=admission.deployment_id,
                owner=record.owner,
                image=record.image,
                spec=admission.spec,
                limits=admission.target,
                start_t=self.host.now,
                attempt=admission.attempt,
                order=self.knowledge.next_order(),
            )
        )
        record.state = "running"
        record.containers.append(cid)
        self.emit(
            {
                "type": "deployed",
                "deployment": admission.deployment_id,
                "container": cid,
                "image": record.image,
                "attempt": admission.attempt,
                "role": admission.role,
                "limits": admission.target.as_dict(),
            }
        )
        self._active = None
        self._pump()

    # -- optimization updates ------------------------------------------------------------------

    def _on_update(self, topic: str, msg: Message) -> None:
        if topic.startswith(CLUSTER_PREFIX):
            return  # peers' limit updates are not ours to apply
        cid = msg.payload["container"]
        limits = Limits.from_dict(msg.payload["limits"])
        try:
            self.host.update_limits(cid, limits)
        except KeyError:
            logger.debug("update for unknown/stopped container %s ignored", cid)
            return
        self.knowledge.set_limits(cid, limits)
        self.emit(
            {
                "type": "limits_updated",
                "container": cid,
                "limits": limits.as_dict(),
                "previous": msg.payload.get("previous"),
                "cycle": msg.payload.get("cycle"),
            }
        )
