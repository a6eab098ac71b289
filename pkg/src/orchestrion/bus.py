"""Topic-based publish/subscribe fabric with optional cluster bridging.

Each device runs its own bus; buses in one simulation share an
:class:`EventSpine`, a single FIFO that makes delivery order deterministic
across the whole cluster. Bridging re-publishes configured topics on peer
buses under a ``cluster/`` prefix so components can tell local traffic from
remote traffic. Payloads are JSON-serializable dicts carrying an ``action``
field, so the same envelope maps 1:1 onto an MQTT 3.1.1 binding
(topic names as below, payload = the JSON document).
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Optional

logger = logging.getLogger(__name__)


class ProtocolError(ValueError):
    """Message rejected: unknown topic or action/topic mismatch."""


class Action(str, Enum):
    DEPLOYMENT_REQUEST = "deployment_request"
    DEPLOYMENT_ANALYSIS_REQUEST = "deployment_analysis_request"
    DEPLOYMENT_OPTIMIZATION_REQUEST = "deployment_optimization_request"
    FORECAST_REQUEST = "forecast_request"
    FORECAST_RESPONSE = "forecast_response"
    DEPLOYMENT_ACCEPT = "deployment_accept"
    DEPLOYMENT_CANCEL = "deployment_cancel"
    DEPLOYMENT_UPDATE = "deployment_update"
    MONITORING_RESULT = "monitoring_result"

    def __str__(self) -> str:
        return self.value


TOPIC_DEPLOY = "deploy"
TOPIC_ANALYZE = "analyze"
TOPIC_FORECAST = "forecast"
TOPIC_MONITOR = "monitor"
CLUSTER_PREFIX = "cluster/"

BASE_TOPICS = (TOPIC_DEPLOY, TOPIC_ANALYZE, TOPIC_FORECAST, TOPIC_MONITOR)

# Topics re-broadcast to peers when bridging is enabled.
BRIDGED_TOPICS = (TOPIC_MONITOR, TOPIC_DEPLOY)

# Which topic each action is allowed on.
ACTION_TOPIC: dict[Action, str] = {
    Action.DEPLOYMENT_REQUEST: TOPIC_DEPLOY,
    Action.DEPLOYMENT_ANALYSIS_REQUEST: TOPIC_ANALYZE,
    Action.DEPLOYMENT_OPTIMIZATION_REQUEST: TOPIC_ANALYZE,
    Action.FORECAST_REQUEST: TOPIC_FORECAST,
    Action.FORECAST_RESPONSE: TOPIC_FORECAST,
    Action.DEPLOYMENT_ACCEPT: TOPIC_DEPLOY,
    Action.DEPLOYMENT_CANCEL: TOPIC_DEPLOY,
    Action.DEPLOYMENT_UPDATE: TOPIC_DEPLOY,
    Action.MONITORING_RESULT: TOPIC_MONITOR,
}


def base_topic(topic: str) -> str:
    """Strip a single ``cluster/`` prefix, if present."""
    if topic.startswith(CLUSTER_PREFIX):
        return topic[len(CLUSTER_PREFIX):]
    return topic


def known_topics(bridged: bool = True) -> tuple[str, ...]:
    topics = list(BASE_TOPICS)
    if bridged:
        topics += [CLUSTER_PREFIX + t for t in BRIDGED_TOPICS]
    return tuple(topics)


@dataclass
class Message:
    """Envelope routed over topics; ``action`` identifies its purpose."""

    action: Action
    payload: dict
    origin: str = ""
    correlation_id: str = ""
    msg_id: str = ""

    def to_wire(self) -> bytes:
        doc = {
            "action": self.action.value,
            "origin": self.origin,
            "correlation_id": self.correlation_id,
            "msg_id": self.msg_id,
            "payload": self.payload,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_wire(cls, raw: bytes) -> "Message":
        doc = json.loads(raw.decode("utf-8"))
        return cls(
            action=Action(doc["action"]),
            payload=doc.get("payload", {}),
            origin=doc.get("origin", ""),
            correlation_id=doc.get("correlation_id", ""),
            msg_id=doc.get("msg_id", ""),
        )


@dataclass
class Subscription:
    """A single subscriber on one topic.

    With a handler, deliveries are dispatched by the spine drain loop.
    Without one, deliveries buffer in ``inbox`` and can be iterated.
    """

    topic: str
    handler: Optional[Callable[[str, Message], None]] = None
    inbox: deque = field(default_factory=deque)

    def pop_all(self) -> list[Message]:
        out = list(self.inbox)
        self.inbox.clear()
        return out

    def __iter__(self) -> Iterator[Message]:
        while self.inbox:
            yield self.inbox.popleft()


class EventSpine:
    """Shared FIFO of pending deliveries plus a structured message log.

    One spine per simulation; publish appends, :meth:`drain` pops in FIFO
    order and invokes handlers (which may publish more). The log records one
    entry per publish event (bridged re-publishes keep the original msg_id,
    so "one broadcast" counts as one logical message).
    """

    def __init__(self) -> None:
        self._pending: deque[tuple[Subscription, str, Message]] = deque()
        self.log: list[dict] = []
        self._seq = 0
        self.now_fn: Callable[[], int] = lambda: 0

    def next_msg_id(self, origin: str) -> str:
        self._seq += 1
        return f"m{self._seq:06d}@{origin}"

    def record(self, device: str, topic: str, msg: Message, bridged_from: str | None = None) -> None:
        self.log.append(
            {
                "seq": len(self.log),
                "t": self.now_fn(),
                "device": device,
                "topic": topic,
                "action": msg.action.value,
                "msg_id": msg.msg_id,
                "correlation_id": msg.correlation_id,
                "origin": msg.origin,
                "bridged_from": bridged_from,
            }
        )

    def enqueue(self, sub: Subscription, topic: str, msg: Message) -> None:
        self._pending.append((sub, topic, msg))

    def drain(self, max_steps: int = 1_000_000) -> int:
        """Dispatch pending deliveries until quiescent; returns step count."""
        steps = 0
        while self._pending:
            sub, topic, msg = self._pending.popleft()
            steps += 1
            if steps > max_steps:
                raise RuntimeError("message storm: drain did not quiesce")
            if sub.handler is None:
                sub.inbox.append(msg)
            else:
                sub.handler(topic, msg)
        return steps


class MessageBus:
    """Per-device topic bus. Delivery order is per-topic FIFO via the spine."""

    def __init__(self, device: str, spine: EventSpine | None = None) -> None:
        self.device = device
        self.spine = spine if spine is not None else EventSpine()
        self._subs: dict[str, list[Subscription]] = {t: [] for t in known_topics()}
        self._peers: dict[str, "MessageBus"] = {}
        self._bridged_topics: tuple[str, ...] = ()

    def subscribe(self, topic: str, handler: Optional[Callable[[str, Message], None]] = None) -> Subscription:
        if topic not in self._subs:
            raise ProtocolError(f"unknown topic: {topic!r}")
        sub = Subscription(topic=topic, handler=handler)
        self._subs[topic].append(sub)
        return sub

    def publish(self, topic: str, msg: Message) -> None:
        if topic not in self._subs:
            raise ProtocolError(f"unknown topic: {topic!r}")
        expected = ACTION_TOPIC[msg.action]
        if base_topic(topic) != expected:
            raise ProtocolError(
                f"action {msg.action.value!r} is not valid on topic {topic!r} (expected {expected!r})"
            )
        if not msg.msg_id:
            msg.msg_id = self.spine.next_msg_id(self.device)
        if not msg.origin:
            msg.origin = self.device
        self.spine.record(self.device, topic, msg)
        for sub in self._subs[topic]:
            self.spine.enqueue(sub, topic, msg)
        # Re-broadcast on peers under the cluster/ prefix; never re-bridge a
        # message that already carries the prefix (loop prevention).
        if self._peers and topic in self._bridged_topics and not topic.startswith(CLUSTER_PREFIX):
            for _, peer in sorted(self._peers.items()):
                peer._deliver_bridged(CLUSTER_PREFIX + topic, msg, bridged_from=self.device)

    def _deliver_bridged(self, topic: str, msg: Message, bridged_from: str) -> None:
        self.spine.record(self.device, topic, msg, bridged_from=bridged_from)
        for sub in self._subs.get(topic, []):
            self.spine.enqueue(sub, topic, msg)

    def bridge(self, peers: dict[str, "MessageBus"], shared_topics: tuple[str, ...] = BRIDGED_TOPICS) -> None:
        """Register peer buses; duplicate registration is an idempotent no-op."""
        for name, peer in peers.items():
            if peer is self:
                raise ProtocolError("cannot bridge a bus to itself")
            self._peers[name] = peer
        self._bridged_topics = tuple(shared_topics)


def bridge_all(buses: dict[str, MessageBus], shared_topics: tuple[str, ...] = BRIDGED_TOPICS) -> None:
    """Fully mesh a set of device buses (each device knows every other)."""
    for name, bus in buses.items():
        peers = {n: b for n, b in buses.items() if n != name}
        bus.bridge(peers, shared_topics)
