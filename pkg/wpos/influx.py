"""
Publishing classification rates to InfluxDB.

Each metrics.csv row becomes one `wpos_rate` point tagged with its cell,
model and F. Needs the optional `influx` extra (aiohttp). Targets are read
from the environment or .env with python-decouple:

- WPOS_INFLUX_VERSION: v2 or v3 (default: v2)
- WPOS_INFLUX_BASE_URL, WPOS_INFLUX_TOKEN
- v2: WPOS_INFLUX_ORG, WPOS_INFLUX_BUCKET, WPOS_INFLUX_PRECISION (default: s)
- v3: WPOS_INFLUX_DB
"""

from __future__ import annotations

import asyncio
import logging
import math
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from decouple import config as env

try:
    import aiohttp
except ImportError:  # pragma: no cover
    aiohttp = None

log = logging.getLogger(__name__)

MEASUREMENT = "wpos_rate"
RETRY_STATUS = frozenset({429, 500, 502, 503, 504})
TRANSIENT_ERRORS = (asyncio.TimeoutError, OSError) + ((aiohttp.ClientError,) if aiohttp else ())


@dataclass(frozen=True)
class InfluxTargetV2:
    base_url: str
    org: str
    bucket: str
    token: str
    precision: str = "s"


@dataclass(frozen=True)
class InfluxTargetV3:
    base_url: str
    db: str
    token: str


InfluxTarget = Union[InfluxTargetV2, InfluxTargetV3]


class WriteRejected(RuntimeError):
    """The server refused the batch (auth failure or malformed points)."""


def _escape(value: Any) -> str:
    return re.sub(r"([\\ ,=])", r"\\\1", str(value))


@dataclass(frozen=True)
class RatePoint:
    """One classification rate with the cell it was measured in."""

    scenario: int
    condition: str
    snr_db: float
    repeat: int
    model: str
    F: int
    rate: float
    feature_dim: int

    def __post_init__(self):
        if not math.isfinite(self.rate):
            raise ValueError(f"rate must be finite, got {self.rate}")

    @classmethod
    def from_row(cls, row: Mapping[str, Any]) -> "RatePoint":
        """Build a point from a metrics row; CSV strings are converted."""
        return cls(
            scenario=int(row["scenario"]),
            condition=str(row["condition"]),
            snr_db=float(row["snr_db"]),
            repeat=int(row["repeat"]),
            model=str(row["model"]),
            F=int(row["F"]),
            rate=float(row["rate"]),
            feature_dim=int(row["feature_dim"]),
        )

    def tags(self) -> Dict[str, Any]:
        return {
            "F": self.F,
            "condition": self.condition,
            "model": self.model,
            "repeat": self.repeat,
            "scenario": self.scenario,
            "snr": self.snr_db,
        }

    def to_line(self, timestamp: Optional[int] = None) -> str:
        """Line protocol record; tags are sorted by key, feature_dim is an integer field."""
        tags = ",".join(f"{_escape(key)}={_escape(value)}" for key, value in sorted(self.tags().items()))
        line = f"{MEASUREMENT},{tags} feature_dim={self.feature_dim}i,rate={self.rate!r}"
        return line if timestamp is None else f"{line} {int(timestamp)}"


def metric_lines(rows: Sequence[Mapping[str, Any]], timestamp: Optional[int] = None) -> List[str]:
    return [RatePoint.from_row(row).to_line(timestamp) for row in rows]


def load_influx_target() -> InfluxTarget:
    version = env("WPOS_INFLUX_VERSION", default="v2").strip().lower()
    base_url = env("WPOS_INFLUX_BASE_URL")
    token = env("WPOS_INFLUX_TOKEN")
    if version in ("v2", "2"):
        return InfluxTargetV2(
            base_url=base_url,
            org=env("WPOS_INFLUX_ORG"),
            bucket=env("WPOS_INFLUX_BUCKET"),
            token=token,
            precision=env("WPOS_INFLUX_PRECISION", default="s"),
        )
    if version in ("v3", "3"):
        return InfluxTargetV3(base_url=base_url, db=env("WPOS_INFLUX_DB"), token=token)
    raise ValueError(f"WPOS_INFLUX_VERSION must be v2 or v3, got {version!r}")


def endpoint_and_headers(target: InfluxTarget) -> Tuple[str, dict]:
    headers = {"Content-Type": "text/plain; charset=utf-8"}
    if isinstance(target, InfluxTargetV2):
        headers["Authorization"] = f"Token {target.token}"
        query = f"org={target.org}&bucket={target.bucket}&precision={target.precision}"
        return f"{target.base_url}/api/v2/write?{query}", headers
    headers["Authorization"] = f"Bearer {target.token}"
    return f"{target.base_url}/api/v3/write_lp?db={target.db}", headers


async def post_batch(session, url: str, headers: dict, body: bytes, attempts: int = 6, backoff_s: float = 0.25) -> None:
    """POST one batch, retrying throttling, server errors and dropped connections.

    Args:
        session: aiohttp client session (anything with a compatible post()).
        url, headers: from endpoint_and_headers().
        body: newline-terminated line protocol.
        attempts: total tries before giving up with RuntimeError.
        backoff_s: first retry delay; doubles per retry up to 8 s.
    """
    for attempt in range(1, attempts + 1):
        try:
            async with session.post(url, data=body, headers=headers) as response:
                status = response.status
                text = "" if status < 300 else await response.text()
        except TRANSIENT_ERRORS as exc:
            problem = f"{type(exc).__name__}: {exc}"
        else:
            if status < 300:
                log.debug("wrote %d bytes (HTTP %d)", len(body), status)
                return
            if status not in RETRY_STATUS:
                raise WriteRejected(f"HTTP {status}: {text[:300]}")
            problem = f"HTTP {status}: {text[:300]}"
        if attempt == attempts:
            raise RuntimeError(f"write failed after {attempts} attempts, last error {problem}")
        log.debug("write attempt %d failed (%s), retrying", attempt, problem)
        await asyncio.sleep(min(backoff_s * 2 ** (attempt - 1), 8.0))


async def publish_lines(
    lines: Sequence[str],
    target: InfluxTarget,
    batch_max_points: int = 5000,
    request_timeout_s: float = 10.0,
) -> int:
    """POST lines in batches; returns the number of records written."""
    if aiohttp is None:
        raise RuntimeError("aiohttp is required; install with wpos[influx]")
    url, headers = endpoint_and_headers(target)
    async with aiohttp.ClientSession(timeout=aiohttp.ClientTimeout(total=request_timeout_s)) as session:
        for start in range(0, len(lines), batch_max_points):
            body = ("\n".join(lines[start : start + batch_max_points]) + "\n").encode("utf-8")
            await post_batch(session, url, headers, body)
    return len(lines)


def publish(lines: Sequence[str], target: Optional[InfluxTarget] = None) -> int:
    target = target if target is not None else load_influx_target()
    return asyncio.run(publish_lines(list(lines), target))
