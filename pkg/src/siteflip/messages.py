"""Control-plane messages between the orchestrator and site workers.

Five message types with fixed field sets. The wire encoding is one JSON
object per line with a ``type`` discriminator; in-process deployments
pass the dataclasses directly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class RegisterWorker:
    worker_id: str
    site: str
    source_prefix: str
    endpoint: str = ""


@dataclass
class PreloadCorrelation:
    run_id: int
    definition: dict[str, str]
    # rows: target, variation_id, src, src_port, dst_port, tx_time, tx_site
    entries: list[list] = field(default_factory=list)


@dataclass
class StartWave:
    run_id: int
    start_ns: int
    targets: list[str] = field(default_factory=list)


@dataclass
class ReplyBatch:
    run_id: int
    site: str
    records: list[list[str]] = field(default_factory=list)
    sent: int = 0
    dropped: int = 0
    rate_limited: int = 0
    unresolved: int = 0
    discarded: int = 0
    final: bool = False


@dataclass
class EndRun:
    run_id: int


MESSAGE_TYPES = {cls.__name__: cls for cls in
                 (RegisterWorker, PreloadCorrelation, StartWave, ReplyBatch, EndRun)}


def encode(msg) -> bytes:
    return (json.dumps({"type": type(msg).__name__, **asdict(msg)}, separators=(",", ":"))
            + "\n").encode()


def decode(line: bytes | str):
    data = json.loads(line)
    try:
        cls = MESSAGE_TYPES[data.pop("type")]
    except KeyError:
        raise ValueError("message without a known type") from None
    return cls(**data)
