"""Decision core: predicted availability, deployment admission, and the
per-container memory/CPU limit optimization rules.

Availability looks forward, not at the instantaneous state: each running
container contributes the maximum over the forecast horizon of its predicted
utilization, floored at its current limit (running containers are never
squeezed by a newcomer). A deployment is admitted only if its target stays
strictly below the predicted availability for every resource; the same strict
rule gates upscale amounts during optimization.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .bus import Action, Message, MessageBus, TOPIC_ANALYZE, TOPIC_DEPLOY, TOPIC_FORECAST
from .forecaster import ForecastResult
from .knowledge import Knowledge
from .model import Limits, OptimizationPolicy, Resource

logger = logging.getLogger(__name__)

_EPS = 1e-9


def _ceil_amount(value: float) -> int:
    """Integer ceiling that forgives float representation slop (100*1.1 -> 110)."""
    return int(math.ceil(value - _EPS))


@dataclass
class PredictionSet:
    """Per-container clamped utilization peaks and the remaining availability.

    ``avail`` may go negative; it is reported as-is, never floored.
    """

    peaks: dict[str, dict[Resource, float]] = field(default_factory=dict)
    avail: dict[Resource, float] = field(default_factory=dict)

    def avail_dict(self) -> dict[str, float]:
        return {res.value: self.avail[res] for res in self.avail}


@dataclass(frozen=True)
class AdmissionVerdict:
    decision: str  # "accept" | "reject"
    evaluated_target: Limits
    reason: str = ""

    @property
    def accepted(self) -> bool:
        return self.decision == "accept"


def predict_availability(
    forecasts: dict[str, ForecastResult | None],
    currents: dict[str, Limits],
    totals: Limits,
    reserve: Limits | None = None,
    last_observed: dict[str, dict] | None = None,
) -> PredictionSet:
    """Clamp predictions below current limits and subtract each container's
    peak from the host totals (minus any configured reserve).

    A container without a usable forecast contributes the larger of its
    current limit and its last observed utilization.
    """
    reserve = reserve or Limits(cpu=0, mem=0)
    last_observed = last_observed or {}
    pred = PredictionSet()
    pred.avail = {
        Resource.CPU: float(totals.cpu - reserve.cpu),
        Resource.MEM: float(totals.mem - reserve.mem),
    }
    metric_by_resource = {Resource.CPU: "cpu_util", Resource.MEM: "mem_util"}
    for cid, limits in currents.items():
        forecast = forecasts.get(cid)
        peaks: dict[Resource, float] = {}
        for res, metric in metric_by_resource.items():
            current = float(limits.get(res))
            series = getattr(forecast, metric, None) if forecast is not None and not getattr(forecast, "error", None) else None
            if series:
                peak = max(max(current, value) for value in series)
            else:
                observed = float((last_observed.get(cid) or {}).get(metric, 0.0))
                peak = max(current, observed)
            peaks[res] = peak
            pred.avail[res] -= peak
        pred.peaks[cid] = peaks
    return pred


def admit(target: Limits, pred: PredictionSet) -> AdmissionVerdict:
    """Accept only if the target sits strictly below predicted availability
    for every resource; equality rejects."""
    for res in (Resource.CPU, Resource.MEM):
        if not float(target.get(res)) < pred.avail[res]:
            return AdmissionVerdict(
                decision="reject",
                evaluated_target=target,
                reason=f"insufficient {res.value}: target {target.get(res)} vs predicted {pred.avail[res]:g}",
            )
    return AdmissionVerdict(decision="accept", evaluated_target=target)


def account_optimization(pred: PredictionSet, deltas: dict[Resource, int]) -> PredictionSet:
    """Debit approved limit changes from the running availability."""
    for res, delta in deltas.items():
        pred.avail[res] -= delta
    return pred


def optimize_memory(current: int, peak_util: float, policy: OptimizationPolicy) -> int:
    """Next memory limit for one container.

    Scale up one step when the peak, padded by the safety margin, no longer
    fits under the current limit. Otherwise try one step down, but never land
    below the padded peak: in that case the current limit is kept.
    Results are bounded to [mem_min, mem_max].
    """
    floor = peak_util * policy.mem_margin
    if floor > current + _EPS:
        return min(current + policy.scale_up.mem, policy.mem_max)
    candidate = current - policy.scale_down.mem
    if candidate + _EPS < floor:
        return current
    return max(candidate, policy.mem_min)


def optimize_cpu(current: int, peak_util: float, peak_throttle: float, policy: OptimizationPolicy, cpu_cap: int) -> int:
    """Next CPU limit for one container.

    Upscale a full step when predicted utilization exceeds the limit; when
    only throttling exceeds its threshold, upscale by a fraction of the step
    proportional to the predicted throttle percentage. Otherwise step down,
    floored at the buffered utilization peak; if even that floor sits above
    the current limit, keep the limit unchanged.
    """
    if peak_util > current + _EPS:
        return min(current + policy.scale_up.cpu, cpu_cap)
    if peak_throttle > policy.throttle_limit_pct:
        adjusted = _ceil_amount(policy.scale_up.cpu * peak_throttle / 100.0)
        return min(current + adjusted, cpu_cap)
    candidate = max(current - policy.scale_down.cpu, _ceil_amount(peak_util * policy.cpu_buffer))
    if candidate >= current:
        return current
    return max(candidate, 0)


@dataclass
class _Pending:
    kind: str  # "admission" | "cycle"
    payload: dict


class Analyzer:
    """Consumes analysis and optimization requests; answers with deployment
    accept/cancel verdicts and limit updates.

    One piece of work is in flight at a time: an optimization cycle runs as an
    atomic sequence and admissions queue behind it, so the sequential
    availability accounting is never interleaved.
    """

    def __init__(
        self,
        bus: MessageBus,
        knowledge: Knowledge,
        metrics_store,
        policy: OptimizationPolicy,
        totals: Limits,
        reserve: Limits,
        horizon: int,
        emit,
    ) -> None:
        self.bus = bus
        self.knowledge = knowledge
        self.metrics = metrics_store
        self.policy = policy
        self.totals = totals
        self.reserve = reserve
        self.horizon = max(1, horizon)
        self.emit = emit
        self._queue: list[_Pending] = []
        self._awaiting: _Pending | None = None
        self._forecast_seq = 0
        self._cycles: dict[str, dict] = {}  # correlation -> gathering state
        bus.subscribe(TOPIC_ANALYZE, self._on_analyze)
        bus.subscribe(TOPIC_FORECAST, self._on_forecast)

    # -- message handling -----------------------------------------------------

    def _on_analyze(self, topic: str, msg: Message) -> None:
        if msg.action is Action.DEPLOYMENT_ANALYSIS_REQUEST:
            self._queue.append(_Pending(kind="admission", payload=dict(msg.payload)))
            self._pump()
        elif msg.action is Action.DEPLOYMENT_OPTIMIZATION_REQUEST:
            self._gather_cycle(msg)

    def _gather_cycle(self, msg: Message) -> None:
        state = self._cycles.setdefault(
            msg.correlation_id,
            {"cycle": msg.payload["cycle"], "count": msg.payload["count"], "containers": []},
        )
        state["containers"].append(msg.payload["container"])
        if len(state["containers"]) == state["count"]:
            del self._cycles[msg.correlation_id]
            self._queue.append(_Pending(kind="cycle", payload=state))
            self._pump()

    def _on_forecast(self, topic: str, msg: Message) -> None:
        if msg.action is not Action.FORECAST_RESPONSE:
            return
        if self._awaiting is None or msg.correlation_id != self._awaiting.payload.get("_forecast_id"):
            return
        pending, self._awaiting = self._awaiting, None
        results = {
            cid: ForecastResult.from_dict(doc) for cid, doc in msg.payload.get("results", {}).items()
        }
        if pending.kind == "admission":
            self._finish_admission(pending.payload, results)
        else:
            self._finish_cycle(pending.payload, results)
        self._pump()

    def _pump(self) -> None:
        if self._awaiting is not None or not self._queue:
            return
        pending = self._queue.pop(0)
        self._forecast_seq += 1
        forecast_id = f"fc{self._forecast_seq:04d}@{self.bus.device}"
        pending.payload["_forecast_id"] = forecast_id
        self._awaiting = pending
        actives = [rec.container_id for rec in self.knowledge.active()]
        self.bus.publish(
            TOPIC_FORECAST,
            Message(
                action=Action.FORECAST_REQUEST,
                payload={"containers": actives, "horizon": self.horizon},
                correlation_id=forecast_id,
            ),
        )

    # -- admission -------------------------------------------------------------

    def _availability(self, forecasts: dict[str, ForecastResult]) -> PredictionSet:
        currents: dict[str, Limits] = {}
        observed: dict[str, dict] = {}
        for rec in self.knowledge.active():
            currents[rec.container_id] = rec.limits
            last = self.metrics.last(rec.container_id)
            if last is not None:
                observed[rec.container_id] = last
        return predict_availability(forecasts, currents, self.totals, self.reserve, observed)

    def _finish_admission(self, payload: dict, forecasts: dict[str, ForecastResult]) -> None:
        pred = self._availability(forecasts)
        target = Limits.from_dict(payload["target"])
        verdict = admit(target, pred)
        action = Action.DEPLOYMENT_ACCEPT if verdict.accepted else Action.DEPLOYMENT_CANCEL
        self.emit(
            {
                "type": "admission",
                "deployment": payload["deployment_id"],
                "analysis_id": payload["analysis_id"],
                "attempt": payload.get("attempt", 1),
                "role": payload.get("role", "request"),
                "verdict": verdict.decision,
                "target": target.as_dict(),
                "avail": pred.avail_dict(),
                "reason": verdict.reason,
            }
        )
        self.bus.publish(
            TOPIC_DEPLOY,
            Message(
                action=action,
                payload={
                    "deployment_id": payload["deployment_id"],
                    "analysis_id": payload["analysis_id"],
                    "target": target.as_dict(),
                    "role": payload.get("role", "request"),
                    "attempt": payload.get("attempt", 1),
                    "avail": pred.avail_dict(),
                    "reason": verdict.reason,
                },
                correlation_id=payload["analysis_id"],
            ),
        )

    # -- optimization cycle ------------------------------------------------------

    def _finish_cycle(self, state: dict, forecasts: dict[str, ForecastResult]) -> None:
        pred = self._availability(forecasts)
        changes = 0
        for cid in state["containers"]:
            record = self.knowledge.containers.get(cid)
            if record is None or record.status != "running":
                continue
            forecast = forecasts.get(cid)
            if forecast is None or forecast.error:
                continue  # no usable forecast: leave the container alone
            changes += self._optimize_container(record, forecast, pred, state["cycle"])
        self.emit(
            {
                "type": "optimization_cycle",
                "cycle": state["cycle"],
                "containers": list(state["containers"]),
                "changes": changes,
                "avail": pred.avail_dict(),
            }
        )

    def _optimize_container(self, record, forecast: ForecastResult, pred: PredictionSet, cycle: int) -> int:
        cid = record.container_id
        obs_mem = self.metrics.observed_max(cid, "mem_util")
        mem_target = optimize_memory(record.limits.mem, obs_mem, self.policy)

        fc_cpu_peak = max(forecast.cpu_util) if forecast.cpu_util else 0.0
        obs_cpu = self.metrics.observed_max(cid, "cpu_util")
        cpu_peak = max(fc_cpu_peak, obs_cpu)
        throttle_peak = max(forecast.throttle_pct) if forecast.throttle_pct else 0.0
        cpu_cap = self.totals.cpu - self.reserve.cpu
        cpu_target = optimize_cpu(record.limits.cpu, cpu_peak, throttle_peak, self.policy, cpu_cap)

        applied: dict[Resource, int] = {}
        final = record.limits
        for res, target_value in ((Resource.MEM, mem_target), (Resource.CPU, cpu_target)):
            current_value = record.limits.get(res)
            delta = target_value - current_value
            if delta == 0:
                continue
            if delta > 0 and not delta < pred.avail[res]:
                self.emit(
                    {
                        "type": "optimization_denied",
                        "container": cid,
                        "resource": res.value,
                        "wanted": target_value,
                        "current": current_value,
                        "avail": pred.avail[res],
                        "cycle": cycle,
                    }
                )
                continue
            applied[res] = delta
            final = final.with_value(res, target_value)
        if not applied:
            return 0
        account_optimization(pred, applied)
        self.emit(
            {
                "type": "optimization",
                "container": cid,
                "cycle": cycle,
                "previous": record.limits.as_dict(),
                "target": final.as_dict(),
                "deltas": {res.value: d for res, d in applied.items()},
            }
        )
        self.bus.publish(
            TOPIC_DEPLOY,
            Message(
                action=Action.DEPLOYMENT_UPDATE,
                payload={
                    "container": cid,
                    "limits": final.as_dict(),
                    "previous": record.limits.as_dict(),
                    "cycle": cycle,
                },
                correlation_id=f"opt-{cycle}-{cid}",
            ),
        )
        return 1
