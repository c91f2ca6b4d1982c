"""Event-log ingestion: TSV parsing, bot filtering, 30-minute sessionization.

The wire format is UTF-8 TSV, one event per line, columns in order:

    timestamp_ms, client_token, customer_id, device, channel, action,
    page_type, query_text, price_cents, country

customer_id, query_text and price_cents may be empty. A header line is
optional and detected by a non-numeric first field. Files ending in ``.gz``
are transparently decompressed.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

DEVICES = ("PC", "Smartphone", "Tablet", "GameConsole", "TV")
CHANNELS = ("Direct", "Paid", "Organic", "Other")
ACTIONS = ("PageView", "Query", "AddToBasket", "RemoveFromBasket", "Purchase")
PAGE_TYPES = ("home", "search", "product", "category", "basket", "checkout", "account", "other")

IDLE_GAP_MS = 30 * 60 * 1000  # strict: a gap of exactly 30 minutes stays in-session

N_COLUMNS = 10

_DEVICE_LOOKUP = {d.lower(): d for d in DEVICES}
_CHANNEL_LOOKUP = {c.lower(): c for c in CHANNELS}
_ACTION_LOOKUP = {a.lower(): a for a in ACTIONS}
_PAGE_LOOKUP = {p.lower(): p for p in PAGE_TYPES}


class IngestError(ValueError):
    """Base class for ingest failures; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int = 0):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


class MalformedLine(IngestError):
    pass


class BadTimestamp(IngestError):
    pass


class UnknownEnum(IngestError):
    pass


class UnsortedInput(IngestError):
    pass


@dataclass(frozen=True, slots=True)
class RawEvent:
    """One timestamped user action with device/channel context."""

    timestamp: int  # milliseconds since epoch, UTC
    client_token: str
    customer_id: Optional[str]
    device: str
    channel: str
    action: str
    page_type: str
    query_text: Optional[str] = None
    price: Optional[int] = None  # cents
    country: str = ""


@dataclass(frozen=True)
class BotFilterConfig:
    """Location/device bot screen plus session-length sanity bounds."""

    allowed_countries: frozenset = frozenset({"NL", "DE", "BE", "FR", "LU"})
    allowed_devices: frozenset = frozenset(DEVICES)
    min_session_events: int = 2
    max_session_events: int = 2000

    def __post_init__(self):
        if self.min_session_events < 1:
            raise ValueError("min_session_events must be >= 1")
        if self.max_session_events <= self.min_session_events:
            raise ValueError("max_session_events must exceed min_session_events")


def _decode_enum(value: str, lookup: dict, what: str, line_no: int) -> str:
    canon = lookup.get(value.strip().lower())
    if canon is None:
        raise UnknownEnum(f"unknown {what} {value!r}", line_no)
    return canon


def parse_event_line(line: str, line_no: int = 0) -> RawEvent:
    """Decode one TSV record into a RawEvent.

    Raises MalformedLine on a wrong column count, BadTimestamp on a
    non-integer or negative timestamp and UnknownEnum for values outside
    the closed device/channel/action/page-type alphabets. Enum decoding is
    case-insensitive.
    """
    cols = line.rstrip("\r\n").split("\t")
    if len(cols) != N_COLUMNS:
        raise MalformedLine(f"expected {N_COLUMNS} columns, got {len(cols)}", line_no)
    raw_ts = cols[0].strip()
    try:
        ts = int(raw_ts)
    except ValueError:
        raise BadTimestamp(f"non-integer timestamp {raw_ts!r}", line_no) from None
    if ts < 0:
        raise BadTimestamp(f"negative timestamp {ts}", line_no)
    price: Optional[int] = None
    if cols[8].strip():
        try:
            price = int(cols[8])
        except ValueError:
            raise MalformedLine(f"bad price {cols[8]!r}", line_no) from None
    return RawEvent(
        timestamp=ts,
        client_token=cols[1],
        customer_id=cols[2] or None,
        device=_decode_enum(cols[3], _DEVICE_LOOKUP, "device", line_no),
        channel=_decode_enum(cols[4], _CHANNEL_LOOKUP, "channel", line_no),
        action=_decode_enum(cols[5], _ACTION_LOOKUP, "action", line_no),
        page_type=_decode_enum(cols[6], _PAGE_LOOKUP, "page_type", line_no),
        query_text=cols[7] or None,
        price=price,
        country=cols[9].strip(),
    )


def read_events(path) -> Iterator[RawEvent]:
    """Stream RawEvents from a TSV file (gzip accepted by .gz extension).

    A header line is skipped when its first field is non-numeric.
    """
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if line_no == 1:
                first = line.split("\t", 1)[0].strip()
                if not first.lstrip("-").isdigit():
                    continue  # header
            yield parse_event_line(line, line_no)


def filter_events(events: Iterable[RawEvent], cfg: BotFilterConfig) -> tuple[list[RawEvent], int]:
    """Drop events whose country or device is outside the allowed sets.

    Order is preserved; returns (kept events, dropped count). Filtering never
    fails and is idempotent.
    """
    kept = []
    dropped = 0
    for e in events:
        if e.country in cfg.allowed_countries and e.device in cfg.allowed_devices:
            kept.append(e)
        else:
            dropped += 1
    return kept, dropped


def sessionize(
    events: Iterable[RawEvent],
    idle_gap_ms: int = IDLE_GAP_MS,
    min_events: int = 2,
    max_events: int = 2000,
):
    """Group events into idle-bounded sessions.

    Consecutive events of one client with an inter-event gap <= idle_gap_ms
    share a session; a strictly larger gap starts a new one. A session is a
    purchase session iff any of its events is a Purchase. If any event
    carries a customer_id the whole session is assigned to that customer
    (late login), otherwise the session is anonymous and keyed by its
    client_token. Sessions with an event count outside
    [min_events, max_events] are dropped.

    Events may arrive interleaved across clients (e.g. globally time-sorted);
    each client's own events must be in non-decreasing timestamp order or
    UnsortedInput is raised.
    """
    from .sessions import Session  # local import to avoid a cycle

    per_client: dict[str, list[RawEvent]] = {}
    for e in events:
        bucket = per_client.get(e.client_token)
        if bucket is None:
            per_client[e.client_token] = [e]
        else:
            if e.timestamp < bucket[-1].timestamp:
                raise UnsortedInput(
                    f"timestamps decrease for client {e.client_token!r} "
                    f"({bucket[-1].timestamp} -> {e.timestamp})"
                )
            bucket.append(e)

    sessions = []
    for token, evs in per_client.items():
        start = 0
        runs = []
        for i in range(1, len(evs)):
            if evs[i].timestamp - evs[i - 1].timestamp > idle_gap_ms:
                runs.append(evs[start:i])
                start = i
        runs.append(evs[start:])
        for k, run in enumerate(runs):
            if not (min_events <= len(run) <= max_events):
                continue
            customer = next((e.customer_id for e in run if e.customer_id), None)
            sessions.append(
                Session(
                    session_id=f"{token}-s{k}",
                    client_token=token,
                    customer_id=customer,
                    device=run[0].device,
                    channel=run[0].channel,
                    start_time=run[0].timestamp,
                    events=tuple(run),
                    purchase=any(e.action == "Purchase" for e in run),
                )
            )
    return sessions


def split_by_identity(sessions):
    """Partition sessions into (anonymous, identified) by customer_id presence."""
    anonymous = [s for s in sessions if s.customer_id is None]
    identified = [s for s in sessions if s.customer_id is not None]
    return anonymous, identified
