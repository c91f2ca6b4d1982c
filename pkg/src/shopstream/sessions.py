"""In-memory session and customer-journey model with derived quantities.

Dwell statistics use the population (divide-by-n) standard deviation and an
expanding window over the pages seen so far. The dwell of a session's final
action is undefined and excluded rather than imputed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .ingest import RawEvent

IDLE_GAP_SECONDS = 30 * 60
MS_PER_DAY = 86_400_000.0


class StepOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class Session:
    """An idle-bounded sequence of one client's events.

    Events are non-decreasing in timestamp and share the client token;
    purchase is true iff some event is a Purchase action.
    """

    session_id: str
    client_token: str
    customer_id: Optional[str]
    device: str
    channel: str
    start_time: int  # ms since epoch, UTC
    events: tuple
    purchase: bool
    country: str = ""

    @property
    def length(self) -> int:
        """Session length: number of actions."""
        return len(self.events)

    @property
    def end_time(self) -> int:
        return self.events[-1].timestamp

    @property
    def page_views(self) -> tuple:
        return tuple(e for e in self.events if e.action == "PageView")

    @property
    def n_page_views(self) -> int:
        return sum(1 for e in self.events if e.action == "PageView")

    @property
    def n_queries(self) -> int:
        return sum(1 for e in self.events if e.action == "Query")

    def page_type_sequence(self, step: Optional[int] = None) -> list[str]:
        """Page types of the first `step` page views (all when step is None)."""
        seq = [e.page_type for e in self.events if e.action == "PageView"]
        return seq if step is None else seq[:step]


class DwellStats(NamedTuple):
    mean: float
    std: float
    count: int


class DeviceSwitchReport(NamedTuple):
    pairs: list
    switch_probability: float


class HistorySummary(NamedTuple):
    orders: int
    days_since_last_purchase: float  # -1.0 sentinel when no prior purchase
    n_sessions: int
    n_devices: int
    device_sequence: list
    switch_probability: float


@dataclass
class Journey:
    """Time-ordered sessions of one identified customer."""

    customer_id: str
    sessions: list = field(default_factory=list)

    def __post_init__(self):
        self.sessions = sorted(self.sessions, key=lambda s: (s.start_time, s.session_id))

    @property
    def inter_session_gaps(self) -> list[float]:
        """Seconds between one session's last event and the next one's first."""
        out = []
        for prev, nxt in zip(self.sessions, self.sessions[1:]):
            out.append((nxt.start_time - prev.end_time) / 1000.0)
        return out


def build_journeys(sessions) -> dict[str, Journey]:
    """Group identified sessions into journeys keyed by customer_id."""
    by_customer: dict[str, list] = {}
    for s in sessions:
        if s.customer_id is not None:
            by_customer.setdefault(s.customer_id, []).append(s)
    return {cid: Journey(cid, sess) for cid, sess in by_customer.items()}


def dwell_times(s: Session) -> list[float]:
    """Dwell per page view: seconds until the next action of any kind.

    The final action of a session has no successor and is excluded, so a
    single-page-view session yields [].
    """
    out = []
    evs = s.events
    for i in range(len(evs) - 1):
        if evs[i].action == "PageView":
            out.append((evs[i + 1].timestamp - evs[i].timestamp) / 1000.0)
    return out


def _population_stats(values) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def dwell_stats_at_step(s: Session, step: int) -> DwellStats:
    """Expanding-window dwell mean/std over the first `step` page views.

    Only page views with a defined dwell contribute; step 0 returns the
    (0, 0, 0) sentinel. Raises StepOutOfRange when step exceeds the number
    of page views in the session.
    """
    if step < 0 or step > s.n_page_views:
        raise StepOutOfRange(f"step {step} outside [0, {s.n_page_views}]")
    window = dwell_times(s)[:step]
    # the final action never carries a dwell, so the window may be shorter than step
    mean, std = _population_stats(window)
    return DwellStats(mean=mean, std=std, count=len(window))


def device_switches(j: Journey) -> DeviceSwitchReport:
    """Device pairs of consecutive sessions and the fraction that differ."""
    devs = [s.device for s in j.sessions]
    pairs = list(zip(devs, devs[1:]))
    if not pairs:
        return DeviceSwitchReport(pairs=[], switch_probability=0.0)
    switches = sum(1 for a, b in pairs if a != b)
    return DeviceSwitchReport(pairs=pairs, switch_probability=switches / len(pairs))


def history_snapshot(j: Optional[Journey], at: int) -> HistorySummary:
    """Summarize a customer's sessions that ended strictly before `at`.

    days_since_last_purchase is fractional, measured from the most recent
    purchase session's end; -1.0 when the customer has no prior purchase.
    A missing journey yields the empty-history summary.
    """
    if j is None:
        return HistorySummary(0, -1.0, 0, 0, [], 0.0)
    prior = [s for s in j.sessions if s.end_time < at]
    orders = sum(1 for s in prior if s.purchase)
    last_purchase_end = max((s.end_time for s in prior if s.purchase), default=None)
    days = -1.0 if last_purchase_end is None else (at - last_purchase_end) / MS_PER_DAY
    devices = [s.device for s in prior]
    switch_prob = device_switches(Journey(j.customer_id, prior)).switch_probability
    return HistorySummary(
        orders=orders,
        days_since_last_purchase=days,
        n_sessions=len(prior),
        n_devices=len(set(devices)),
        device_sequence=devices,
        switch_probability=switch_prob,
    )


# --- JSON-lines interchange -------------------------------------------------

def session_to_json(s: Session) -> str:
    rec = {
        "session_id": s.session_id,
        "client_token": s.client_token,
        "customer_id": s.customer_id,
        "device": s.device,
        "channel": s.channel,
        "start_ms": s.start_time,
        "purchase": s.purchase,
        "country": s.country or (s.events[0].country if s.events else ""),
        "events": [
            [e.timestamp, e.action, e.page_type, e.query_text, e.price]
            for e in s.events
        ],
    }
    return json.dumps(rec, separators=(",", ":"), sort_keys=True)


def session_from_json(line: str) -> Session:
    rec = json.loads(line)
    country = rec.get("country", "")
    events = tuple(
        RawEvent(
            timestamp=ts,
            client_token=rec["client_token"],
            customer_id=rec["customer_id"],
            device=rec["device"],
            channel=rec["channel"],
            action=action,
            page_type=page_type,
            query_text=query,
            price=price,
            country=country,
        )
        for ts, action, page_type, query, price in rec["events"]
    )
    return Session(
        session_id=rec["session_id"],
        client_token=rec["client_token"],
        customer_id=rec["customer_id"],
        device=rec["device"],
        channel=rec["channel"],
        start_time=rec["start_ms"],
        events=events,
        purchase=rec["purchase"],
        country=country,
    )


def write_sessions(path, sessions) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(session_to_json(s))
            fh.write("\n")


def read_sessions(path) -> list[Session]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(session_from_json(line))
    return out
