"""Shared test oracles and corpus builders.

Everything here is deliberately naive and independent of the library's own
algorithms: dict counting, explicit loops, no shared helpers, so the tests
compare two separately derived answers.
"""

from __future__ import annotations

import numpy as np

from shopstream.ingest import RawEvent
from shopstream.sessions import Session

MS = 1000
MINUTE = 60 * MS
IDLE_MS = 30 * MINUTE


def mk_event(
    ts,
    token="C1",
    customer=None,
    device="PC",
    channel="Direct",
    action="PageView",
    page="home",
    query=None,
    price=None,
    country="NL",
):
    return RawEvent(
        timestamp=int(ts),
        client_token=token,
        customer_id=customer,
        device=device,
        channel=channel,
        action=action,
        page_type=page,
        query_text=query,
        price=price,
        country=country,
    )


def mk_session(
    events,
    session_id="s0",
    customer=None,
    device=None,
    channel=None,
    purchase=None,
):
    events = tuple(events)
    return Session(
        session_id=session_id,
        client_token=events[0].client_token,
        customer_id=customer,
        device=device or events[0].device,
        channel=channel or events[0].channel,
        start_time=events[0].timestamp,
        events=events,
        purchase=any(e.action == "Purchase" for e in events) if purchase is None else purchase,
    )


def pageview_session(times_s, session_id="s0", customer=None, device="PC",
                     channel="Direct", page="home", extra=None):
    """Session of page views at the given second offsets plus optional extras."""
    events = [
        mk_event(t * MS, customer=customer, device=device, channel=channel, page=page)
        for t in times_s
    ]
    if extra:
        events += list(extra)
    events.sort(key=lambda e: e.timestamp)
    return mk_session(events, session_id=session_id, customer=customer,
                      device=device, channel=channel)


def brute_force_sessionize(events, idle_gap_ms=IDLE_MS, min_events=2, max_events=2000):
    """Reference splitter: per-client chronological scan with explicit state.

    Returns a set of session signatures:
    (token, first_ts, event timestamps tuple, customer_id, purchase).
    """
    by_token = {}
    for e in events:
        by_token.setdefault(e.client_token, []).append(e)
    signatures = set()
    for token, evs in by_token.items():
        evs = sorted(evs, key=lambda e: e.timestamp)
        current = []
        groups = []
        for e in evs:
            if current and e.timestamp - current[-1].timestamp > idle_gap_ms:
                groups.append(current)
                current = []
            current.append(e)
        if current:
            groups.append(current)
        for g in groups:
            if len(g) < min_events or len(g) > max_events:
                continue
            customer = None
            for e in g:
                if e.customer_id is not None:
                    customer = e.customer_id
                    break
            purchase = False
            for e in g:
                if e.action == "Purchase":
                    purchase = True
            signatures.add(
                (token, g[0].timestamp, tuple(e.timestamp for e in g), customer, purchase)
            )
    return signatures


def session_signatures(sessions):
    return {
        (
            s.client_token,
            s.start_time,
            tuple(e.timestamp for e in s.events),
            s.customer_id,
            s.purchase,
        )
        for s in sessions
    }


def random_event_stream(rng, max_events=500):
    """A random multi-client stream with gaps straddling the 30-minute rule."""
    n_clients = int(rng.integers(1, 6))
    events = []
    for c in range(n_clients):
        token = f"T{c}"
        n = int(rng.integers(1, max(2, max_events // n_clients)))
        ts = int(rng.integers(0, 10**9))
        customer = f"u{c}" if rng.random() < 0.5 else None
        for _ in range(n):
            action = ["PageView", "Query", "AddToBasket", "Purchase"][int(rng.integers(4))]
            events.append(
                mk_event(
                    ts,
                    token=token,
                    customer=customer if rng.random() < 0.3 else None,
                    action=action,
                    page="search" if action == "Query" else "home",
                    query="q1" if action == "Query" else None,
                )
            )
            # gaps concentrated around the boundary: exactly 30 min sometimes
            choice = rng.random()
            if choice < 0.2:
                gap = IDLE_MS  # exactly at the boundary: stays in-session
            elif choice < 0.4:
                gap = IDLE_MS + 1  # just over: new session
            else:
                gap = int(rng.integers(1, 2 * IDLE_MS))
            ts += gap
    events.sort(key=lambda e: (e.timestamp, e.client_token))
    return events


def brute_force_prf(y_true, y_pred):
    tp = fp = fn = 0
    for t, p in zip(y_true, y_pred):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 1:
            fn += 1
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def brute_force_chain_probs(sequences, alphabet, alpha):
    counts = {a: {b: 0 for b in alphabet} for a in alphabet}
    for seq in sequences:
        for a, b in zip(seq, seq[1:]):
            counts[a][b] += 1
    probs = {}
    k = len(alphabet)
    for a in alphabet:
        row_total = sum(counts[a].values())
        probs[a] = {b: (counts[a][b] + alpha) / (row_total + alpha * k) for b in alphabet}
    return probs


def sample_chain_sequences(rng, chain_dict, initial, length, count, page_types):
    """Draw symbol sequences from a dict-of-dicts transition chain."""
    out = []
    init_keys = list(initial.keys())
    init_p = np.array([initial[k] for k in init_keys])
    init_p = init_p / init_p.sum()
    rows = {
        src: (list(row.keys()), np.array(list(row.values())) / sum(row.values()))
        for src, row in chain_dict.items()
    }
    for _ in range(count):
        cur = init_keys[int(rng.choice(len(init_keys), p=init_p))]
        seq = [cur]
        for _ in range(length - 1):
            keys, p = rows[cur]
            cur = keys[int(rng.choice(len(keys), p=p))]
            seq.append(cur)
        out.append(seq)
    return out
