"""Scenario configuration: JSON documents checked against a published schema.

Every default is filled in by :func:`resolve`, and the resolved document is
what gets written next to the results, so a run can be repeated from it
alone.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .core import RwndqParams, StampMode
from .sim.network import AQM_KINDS, AqmConfig, TopologySpec
from .tcp import SenderConfig
from .workloads import ElephantSpec, IncastSpec


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_posint = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}

SCHEMA = _obj({
    "name": {"type": "string"},
    "seed": _int,
    "duration_s": _pos,
    "topology": _obj({
        "kind": {"enum": ["star", "leaf_core"]},
        "sender_hosts": _posint,
        "receiver_hosts": _posint,
        "racks": _posint,
        "hosts_per_rack": _posint,
        "link_rate_bps": _pos,
        "propagation_s": {"type": "number", "minimum": 0},
        "buffer_bytes": _posint,
        "aqm_scope": {"enum": ["all", "core"]},
    }),
    "aqm": _obj({
        "kind": {"enum": list(AQM_KINDS)},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "T_s": _pos,
        "M": _posint,
        "idle_timeout_s": _pos,
        "min_window_bytes": _nonneg_int,
        "stamp_mode": {"enum": [m.value for m in StampMode]},
        "threshold_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "use_average": {"type": "boolean"},
        "avg_sample_period_s": _pos,
    }, required=["kind"]),
    "sender": _obj({
        "type": {"enum": ["reno", "dctcp"]},
        "mss_bytes": _posint,
        "init_cwnd_segments": _posint,
        "rto_min_s": _pos,
        "rto_init_s": _pos,
        "rto_max_s": _pos,
        "rcv_buffer_bytes": _posint,
        "delayed_ack": {"type": "boolean"},
        "cwnd_validation": {"type": "boolean"},
        "dctcp_g": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    }),
    "scale": _obj({
        "scale": {"type": "integer", "minimum": 0, "maximum": 14},
        "shim": {"type": "boolean"},
    }),
    "workload": _obj({
        "incast": {"oneOf": [{"type": "null"}, _obj({
            "n_senders": _posint,
            "block_size_bytes": _posint,
            "blocks_per_request": _posint,
            "parallel_connections": _posint,
            "epoch_times_s": {"type": "array", "items": {"type": "number", "minimum": 0},
                              "minItems": 1},
            "start_jitter_s": {"type": "number", "minimum": 0},
        })]},
        "elephants": {"oneOf": [{"type": "null"}, _obj({
            "n_flows": _nonneg_int,
            "start_s": {"type": "number", "minimum": 0},
            "duration_s": _pos,
        })]},
    }),
    "metrics": _obj({
        "sample_interval_s": _pos,
        "goodput_warmup_s": {"type": "number", "minimum": 0},
    }),
    "checks": _obj({
        "verify_checksums": {"type": "boolean"},
        "strict": {"type": "boolean"},
    }),
}, required=["topology", "aqm", "workload"])

DEFAULTS = {
    "name": "scenario",
    "seed": 1,
    "duration_s": 5.0,
    "topology": {
        "kind": "star", "sender_hosts": 16, "receiver_hosts": 1, "racks": 3, "hosts_per_rack": 7,
        "link_rate_bps": 1e9, "propagation_s": 25e-6, "buffer_bytes": 131072, "aqm_scope": "all",
    },
    "aqm": {
        "kind": "rwndq", "alpha": 0.25, "T_s": 100e-6, "M": 10, "idle_timeout_s": 1.0,
        "min_window_bytes": 1460, "stamp_mode": "data_port", "threshold_fraction": 0.25,
        "use_average": False, "avg_sample_period_s": 48e-6,
    },
    "sender": {
        "type": "reno", "mss_bytes": 1460, "init_cwnd_segments": 10, "rto_min_s": 0.2,
        "rto_init_s": 1.0, "rto_max_s": 60.0, "rcv_buffer_bytes": 262144, "delayed_ack": False,
        "cwnd_validation": True, "dctcp_g": 0.0625,
    },
    "scale": {"scale": 2, "shim": True},
    "workload": {"incast": None, "elephants": None},
    "metrics": {"sample_interval_s": 0.01, "goodput_warmup_s": 0.5},
    "checks": {"verify_checksums": True, "strict": True},
}

INCAST_DEFAULTS = {
    "n_senders": 64, "block_size_bytes": 11500, "blocks_per_request": 100,
    "parallel_connections": 1, "epoch_times_s": [0.0], "start_jitter_s": 1e-3,
}
ELEPHANT_DEFAULTS = {"n_flows": 8, "start_s": 0.0, "duration_s": 5.0}


def _key_of(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return ".".join(filter(None, [path, extra[0] if extra else ""]))
    if err.validator == "required":
        missing = err.message.split("'")[1]
        return ".".join(filter(None, [path, missing]))
    return path or "<root>"


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        key = _key_of(err)
        if err.validator == "additionalProperties":
            raise ConfigError(f"unknown key {key!r}", key)
        if err.validator == "required":
            raise ConfigError(f"missing required key {key!r}", key)
        raise ConfigError(f"invalid value for {key!r}: {err.message}", key)


def _merge(defaults: dict, doc: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in doc.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(doc: dict) -> dict:
    """Validate and fill every default in."""
    validate(doc)
    out = _merge(DEFAULTS, doc)
    wl = out["workload"]
    if wl.get("incast") is not None:
        wl["incast"] = _merge(INCAST_DEFAULTS, wl["incast"])
    if wl.get("elephants") is not None:
        wl["elephants"] = _merge(ELEPHANT_DEFAULTS, wl["elephants"])
    if wl.get("incast") is None and wl.get("elephants") is None:
        raise ConfigError("workload needs incast and/or elephants", "workload")
    if out["aqm"]["kind"] == "rwndq" and out["aqm"]["min_window_bytes"] > out["topology"]["buffer_bytes"]:
        raise ConfigError("min_window_bytes exceeds buffer_bytes", "aqm.min_window_bytes")
    return out


def load(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    return resolve(doc)


def dumps(resolved: dict) -> str:
    return json.dumps(resolved, indent=2, sort_keys=True) + "\n"


def digest(resolved: dict) -> str:
    return hashlib.sha256(dumps(resolved).encode()).hexdigest()


@dataclass
class ScenarioConfig:
    """Typed view of a resolved document."""

    name: str
    seed: int
    duration: float
    topology: TopologySpec
    aqm: AqmConfig
    sender_type: str
    sender: SenderConfig
    delayed_ack: bool
    shim: bool
    incast: IncastSpec | None
    elephants: ElephantSpec | None
    sample_interval: float
    goodput_warmup: float
    verify_checksums: bool
    strict: bool
    resolved: dict

    @classmethod
    def from_resolved(cls, r: dict) -> ScenarioConfig:
        t, a, s = r["topology"], r["aqm"], r["sender"]
        topo = TopologySpec(
            kind=t["kind"], sender_hosts=t["sender_hosts"], receiver_hosts=t["receiver_hosts"],
            racks=t["racks"], hosts_per_rack=t["hosts_per_rack"], link_rate=t["link_rate_bps"],
            propagation=t["propagation_s"], buffer=t["buffer_bytes"], aqm_scope=t["aqm_scope"],
        )
        params = None
        if a["kind"] == "rwndq":
            params = RwndqParams(T=a["T_s"], M=a["M"], B=t["buffer_bytes"], alpha=a["alpha"],
                                 idle_timeout=a["idle_timeout_s"], min_window=a["min_window_bytes"])
        aqm = AqmConfig(kind=a["kind"], rwndq=params, stamp_mode=StampMode(a["stamp_mode"]),
                        threshold_fraction=a["threshold_fraction"], use_average=a["use_average"],
                        avg_sample_period=a["avg_sample_period_s"])
        sender = SenderConfig(
            mss=s["mss_bytes"], init_cwnd_segments=s["init_cwnd_segments"], rto_min=s["rto_min_s"],
            rto_init=s["rto_init_s"], rto_max=s["rto_max_s"], scale=r["scale"]["scale"],
            rcv_buffer=s["rcv_buffer_bytes"], cwnd_validation=s["cwnd_validation"],
            dctcp_g=s["dctcp_g"],
        )
        wl = r["workload"]
        incast = None
        if wl["incast"] is not None:
            i = wl["incast"]
            incast = IncastSpec(
                n_senders=i["n_senders"], block_size=i["block_size_bytes"],
                blocks_per_request=i["blocks_per_request"],
                parallel_connections=i["parallel_connections"], epochs=len(i["epoch_times_s"]),
                epoch_times=list(i["epoch_times_s"]), start_jitter=i["start_jitter_s"],
            )
        elephants = None
        if wl["elephants"] is not None:
            e = wl["elephants"]
            elephants = ElephantSpec(n_flows=e["n_flows"], start=e["start_s"], duration=e["duration_s"])
        return cls(
            name=r["name"], seed=r["seed"], duration=r["duration_s"], topology=topo, aqm=aqm,
            sender_type=s["type"], sender=sender, delayed_ack=s["delayed_ack"],
            shim=r["scale"]["shim"], incast=incast, elephants=elephants,
            sample_interval=r["metrics"]["sample_interval_s"],
            goodput_warmup=r["metrics"]["goodput_warmup_s"],
            verify_checksums=r["checks"]["verify_checksums"], strict=r["checks"]["strict"],
            resolved=r,
        )

    @classmethod
    def from_dict(cls, doc: dict) -> ScenarioConfig:
        return cls.from_resolved(resolve(doc))


def with_seed(resolved: dict, seed: int) -> dict:
    out = copy.deepcopy(resolved)
    out["seed"] = seed
    return out
