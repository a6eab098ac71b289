"""Built-in experiment scenarios.

Four single-device experiment families (ample limits, drastically low limits,
interleaved deployment onto a stabilized system, extreme host constraints),
each in a memory-dominant and a CPU-dominant flavor, plus a three-device
cluster load-balancing scenario. Limit values follow the experiment setups
these scenarios reproduce; expectations encode the required outcomes.
"""
from __future__ import annotations

import math

MEM_PEAKS = (95, 95, 95, 80, 95)
CPU_PEAKS = (150, 150, 150, 120, 140)
OWNER = "vendor-a"
DEVICE = "10.0.0.1"
PERIOD_S = 1800

_BASE_POLICY = {
    "scale_up": {"cpu": 50, "mem": 20},
    "scale_down": {"cpu": 100, "mem": 20},
    "cpu_buffer": 1.10,
    "mem_margin": 1.10,
    "throttle_limit_pct": 25.0,
    "mem_min": 32,
    "mem_max": 500,
    "optimization_interval_s": 300,
    "warmup_delay_s": 300,
}

_MONITOR = {"scrape_interval_s": 10, "retention_s": 7200, "max_attempts": 10}
_FORECAST = {"bucket_s": 60, "min_points": 7}


def _policy(warmup_s: int) -> dict:
    return {**_BASE_POLICY, "warmup_delay_s": warmup_s}


def _mem_image(index: int, request_mem: int, base_mem: int) -> dict:
    return {
        "owner": OWNER,
        "name": f"memory-{index}",
        "workload": {
            "pattern": index,
            "workload_class": "mem",
            "period_s": PERIOD_S,
            "peak": MEM_PEAKS[index - 1],
        },
        "request": {"cpu": 100, "mem": request_mem},
        "base": {"cpu": 50, "mem": base_mem},
    }


def _cpu_image(index: int, request_cpu: int, base_cpu: int) -> dict:
    return {
        "owner": OWNER,
        "name": f"cpu-{index}",
        "workload": {
            "pattern": index,
            "workload_class": "cpu",
            "period_s": PERIOD_S,
            "peak": CPU_PEAKS[index - 1],
        },
        "request": {"cpu": request_cpu, "mem": 64},
        "base": {"cpu": base_cpu, "mem": 32},
    }


def _schedule(entries: list[tuple[int, str]]) -> list[dict]:
    return [{"at_s": t, "owner": OWNER, "image": name, "device": DEVICE} for t, name in entries]


def _device(reserved_cpu: int = 0, reserved_mem: int = 0) -> dict:
    return {
        "address": DEVICE,
        "cpu_total": 1000,
        "mem_total": 1000,
        "reserved_cpu": reserved_cpu,
        "reserved_mem": reserved_mem,
    }


def _mem_band(peak: int) -> list[int]:
    return [peak, math.floor(peak * 1.25)]


def exp1_mem() -> dict:
    """Five memory workloads with ample limits: all admitted, limits converge."""
    warmup = PERIOD_S
    start = 2
    converge_by = start + warmup + 4 * 300
    return {
        "name": "exp1_mem",
        "seed": 11,
        "duration_s": 3600,
        "devices": [_device()],
        "images": [_mem_image(i, 150, 100) for i in range(1, 6)],
        "schedule": _schedule([(start, f"memory-{i}") for i in range(1, 6)]),
        "policy": _policy(warmup),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {"type": "decision_sequence", "resource": "mem", "expect": [["accept", 150]] * 5},
            {"type": "zero_oom"},
            {
                "type": "mem_limits_in_band",
                "mode": "from_t",
                "from_s": converge_by + 3,
                "bands": {f"memory-{i}": _mem_band(MEM_PEAKS[i - 1]) for i in range(1, 6)},
            },
        ],
    }


def exp1_cpu() -> dict:
    """Five CPU workloads whose requests oversubscribe the host: the fourth
    falls back to its base limits, the fifth is rejected outright."""
    return {
        "name": "exp1_cpu",
        "seed": 11,
        "duration_s": 900,
        "devices": [_device()],
        "images": [_cpu_image(i, 300, 100) for i in range(1, 6)],
        "schedule": _schedule(
            [(2, "cpu-1"), (62, "cpu-2"), (122, "cpu-3"), (332, "cpu-4"), (347, "cpu-5")]
        ),
        "policy": _policy(300),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {
                "type": "decision_sequence",
                "resource": "cpu",
                "expect": [
                    ["accept", 300],
                    ["accept", 300],
                    ["accept", 300],
                    ["reject", 300],
                    ["accept", 100],
                    ["reject", 300],
                    ["reject", 100],
                ],
            },
            {"type": "zero_oom"},
        ],
    }


def exp2_mem() -> dict:
    """Drastically low memory limits: every workload is OOM-killed repeatedly
    and recovered through escalating retry targets."""
    return {
        "name": "exp2_mem",
        "seed": 11,
        "duration_s": 5400,
        "devices": [_device()],
        "images": [_mem_image(i, 15, 10) for i in range(1, 6)],
        "schedule": _schedule([(2, f"memory-{i}") for i in range(1, 6)]),
        "policy": _policy(PERIOD_S),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {"type": "min_oom_per_deployment", "min": 2},
            {"type": "all_deployments_running"},
            {"type": "escalation_exact"},
            {
                "type": "mem_limits_in_band",
                "mode": "final_container",
                "bands": {f"memory-{i}": _mem_band(MEM_PEAKS[i - 1]) for i in range(1, 6)},
            },
        ],
    }


def exp2_cpu() -> dict:
    """Misconfigured low CPU limits: everything deploys, throttles hard, and
    the optimizer removes the delays within a few cycles."""
    warmup = PERIOD_S
    start = 2
    return {
        "name": "exp2_cpu",
        "seed": 11,
        "duration_s": 3600,
        "devices": [_device()],
        "images": [_cpu_image(i, 100, 50) for i in range(1, 6)],
        "schedule": _schedule([(start, f"cpu-{i}") for i in range(1, 6)]),
        "policy": _policy(warmup),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {"type": "decision_sequence", "resource": "cpu", "expect": [["accept", 100]] * 5},
            {"type": "initial_throttle_full"},
            {"type": "throttle_recovered", "from_s": start + warmup + 4 * 300 + 3, "max_pct": 25.0},
            {"type": "backlog_drained"},
            {"type": "zero_oom"},
        ],
    }


def exp3_mem() -> dict:
    """Two memory workloads stabilize, then two more arrive: newcomers converge
    without disturbing the existing containers' limits."""
    return {
        "name": "exp3_mem",
        "seed": 11,
        "duration_s": 7200,
        "devices": [_device()],
        "images": [_mem_image(i, 150, 100) for i in range(1, 5)],
        "schedule": _schedule([(2, "memory-1"), (2, "memory-2")])
        + [
            {"after_stable_cycles": 2, "owner": OWNER, "image": "memory-3", "device": DEVICE},
            {"after_stable_cycles": 2, "owner": OWNER, "image": "memory-4", "device": DEVICE},
        ],
        "policy": _policy(PERIOD_S),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {"type": "decision_sequence", "resource": "mem", "expect": [["accept", 150]] * 4},
            {"type": "zero_oom"},
            {
                "type": "existing_first",
                "existing_images": ["memory-1", "memory-2"],
                "newcomer_images": ["memory-3", "memory-4"],
            },
            {
                "type": "newcomer_mem_band",
                "bands": {"memory-3": _mem_band(95), "memory-4": _mem_band(80)},
            },
        ],
    }


def exp3_cpu() -> dict:
    """CPU flavor of the interleaved-deployment experiment."""
    return {
        "name": "exp3_cpu",
        "seed": 11,
        "duration_s": 7200,
        "devices": [_device()],
        "images": [_cpu_image(i, 300, 100) for i in range(1, 5)],
        "schedule": _schedule([(2, "cpu-1"), (2, "cpu-2")])
        + [
            {"after_stable_cycles": 2, "owner": OWNER, "image": "cpu-3", "device": DEVICE},
            {"after_stable_cycles": 2, "owner": OWNER, "image": "cpu-4", "device": DEVICE},
        ],
        "policy": _policy(300),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {"type": "decision_sequence", "resource": "cpu", "expect": [["accept", 300]] * 4},
            {"type": "zero_oom"},
            {
                "type": "existing_first",
                "existing_images": ["cpu-1", "cpu-2"],
                "newcomer_images": ["cpu-3", "cpu-4"],
            },
            {"type": "final_throttle_below", "max_pct": 25.0},
        ],
    }


def exp4_mem_400() -> dict:
    """400 MB of free memory: two admissions fit, the third fails at both its
    requested and base limits."""
    return {
        "name": "exp4_mem_400",
        "seed": 11,
        "duration_s": 600,
        "devices": [_device(reserved_mem=600)],
        "images": [_mem_image(i, 150, 100) for i in range(1, 4)],
        "schedule": _schedule([(30, "memory-1"), (60, "memory-2"), (90, "memory-3")]),
        "policy": _policy(300),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {
                "type": "decision_sequence",
                "resource": "mem",
                "expect": [["accept", 150], ["accept", 150], ["reject", 150], ["reject", 100]],
            },
        ],
    }


def exp4_mem_200() -> dict:
    """200 MB of free memory admits exactly one workload."""
    return {
        "name": "exp4_mem_200",
        "seed": 11,
        "duration_s": 600,
        "devices": [_device(reserved_mem=800)],
        "images": [_mem_image(i, 150, 100) for i in range(1, 4)],
        "schedule": _schedule([(30, "memory-1"), (60, "memory-2"), (90, "memory-3")]),
        "policy": _policy(300),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {
                "type": "decision_sequence",
                "resource": "mem",
                "expect": [
                    ["accept", 150],
                    ["reject", 150],
                    ["reject", 100],
                    ["reject", 150],
                    ["reject", 100],
                ],
            },
        ],
    }


def exp4_cpu_350() -> dict:
    """350m of free CPU: the first workload lands at its requested 300m, the
    rest are rejected at both limit levels."""
    images = [_cpu_image(1, 300, 100), _cpu_image(2, 100, 50), _cpu_image(3, 100, 50)]
    return {
        "name": "exp4_cpu_350",
        "seed": 11,
        "duration_s": 900,
        "devices": [_device(reserved_cpu=650)],
        "images": images,
        "schedule": _schedule([(30, "cpu-1"), (60, "cpu-2"), (90, "cpu-3")]),
        "policy": _policy(300),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {
                "type": "decision_sequence",
                "resource": "cpu",
                "expect": [
                    ["accept", 300],
                    ["reject", 100],
                    ["reject", 50],
                    ["reject", 100],
                    ["reject", 50],
                ],
            },
        ],
    }


def exp4_cpu_100() -> dict:
    """100m of free CPU: the first workload only fits at its base limits and
    then throttles forever because no upscale can be granted."""
    return {
        "name": "exp4_cpu_100",
        "seed": 11,
        "duration_s": 1200,
        "devices": [_device(reserved_cpu=900)],
        "images": [_cpu_image(i, 100, 50) for i in range(1, 4)],
        "schedule": _schedule([(30, "cpu-1"), (60, "cpu-2"), (90, "cpu-3")]),
        "policy": _policy(300),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {
                "type": "decision_sequence",
                "resource": "cpu",
                "expect": [
                    ["reject", 100],
                    ["accept", 50],
                    ["reject", 100],
                    ["reject", 50],
                    ["reject", 100],
                    ["reject", 50],
                ],
            },
            {
                "type": "no_cpu_upscale",
                "image": "cpu-1",
                "min_denials": 1,
                "min_full_throttle_samples": 5,
            },
        ],
    }


def cluster_3dev() -> dict:
    """Three identical devices balancing four sequential memory deployments:
    executor sequence 1, 2, 3, 1 with a single extra bridged message each."""
    addresses = ["10.0.0.1", "10.0.0.2", "10.0.0.3"]
    return {
        "name": "cluster_3dev",
        "seed": 11,
        "duration_s": 2100,
        "cluster": True,
        "devices": [
            {"address": a, "cpu_total": 1000, "mem_total": 1000, "reserved_cpu": 0, "reserved_mem": 0}
            for a in addresses
        ],
        "images": [_mem_image(i, 150, 100) for i in range(1, 5)],
        "schedule": [
            {"at_s": 30, "owner": OWNER, "image": "memory-1", "device": "10.0.0.1"},
            {"at_s": 480, "owner": OWNER, "image": "memory-2", "device": "10.0.0.1"},
            {"at_s": 930, "owner": OWNER, "image": "memory-3", "device": "10.0.0.1"},
            {"at_s": 1830, "owner": OWNER, "image": "memory-4", "device": "10.0.0.1"},
        ],
        "policy": _policy(3600),
        "monitor": _MONITOR,
        "forecast": _FORECAST,
        "expectations": [
            {"type": "executor_sequence", "expect": ["10.0.0.1", "10.0.0.2", "10.0.0.3", "10.0.0.1"]},
            {"type": "cluster_message_overhead"},
            {"type": "decision_sequence", "resource": "mem", "expect": [["accept", 150]] * 4},
        ],
    }


BUILTIN_SCENARIOS = {
    "exp1_mem": exp1_mem,
    "exp1_cpu": exp1_cpu,
    "exp2_mem": exp2_mem,
    "exp2_cpu": exp2_cpu,
    "exp3_mem": exp3_mem,
    "exp3_cpu": exp3_cpu,
    "exp4_mem_400": exp4_mem_400,
    "exp4_mem_200": exp4_mem_200,
    "exp4_cpu_350": exp4_cpu_350,
    "exp4_cpu_100": exp4_cpu_100,
    "cluster_3dev": cluster_3dev,
}


def builtin_scenario(name: str) -> dict:
    try:
        return BUILTIN_SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in scenario {name!r}; known: {', '.join(sorted(BUILTIN_SCENARIOS))}") from None
