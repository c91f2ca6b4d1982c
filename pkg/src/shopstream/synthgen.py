"""Seeded synthetic clickstream generator.

Emits TSV event logs in the ingest wire format plus a truth.jsonl sidecar
with per-session labels, and is calibrated so that configured categorical
marginals (device mix per label, channel mix per label, anonymous share,
multi-device ownership shares) are reproduced within sampling noise at
corpus scale. Inter-session gaps always exceed 30 minutes and intra-session
gaps never do, so sessionization recovers the generated boundaries exactly.

Device assignment reconciles two targets at once: per-label device mixes and
per-customer multi-device shares. Customers are either sticky (one device
for every session) or roaming (devices drawn per session from the label
mix, with at least two distinct devices among their identified sessions).
Sticky purchasers draw their device from the purchase mix; the sticky
non-purchaser device distribution is solved from the exact pass-one session
counts so the non-purchase marginal lands on its target too.

All output is a pure function of (config, seed): per-customer RNG streams
make generation order-independent and byte-reproducible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .ingest import CHANNELS, DEVICES, PAGE_TYPES, RawEvent, sessionize

MS_PER_SECOND = 1000
MS_PER_MINUTE = 60_000
MS_PER_HOUR = 3_600_000
MS_PER_DAY = 86_400_000
CET_OFFSET_MS = MS_PER_HOUR
IDLE_GAP_MS = 30 * MS_PER_MINUTE
_EPOCH_WEEKDAY = 3  # 1970-01-01 is a Thursday

# 2019-10-01 00:00 CET
WINDOW_START_MS = int(datetime(2019, 9, 30, 23, 0, tzinfo=timezone.utc).timestamp() * 1000)


class InvalidConfig(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _normalized(raw: dict) -> dict:
    total = sum(raw.values())
    return {k: v / total for k, v in raw.items()}


# Default per-label marginals, normalized so each mix sums to exactly 1.
PURCHASE_DEVICE_MIX = _normalized(
    {"Smartphone": 47.00, "PC": 44.97, "Tablet": 8.03, "GameConsole": 0.004, "TV": 0.001}
)
NONPURCHASE_DEVICE_MIX = _normalized(
    {"Smartphone": 58.09, "PC": 34.40, "Tablet": 7.50, "GameConsole": 0.004, "TV": 0.002}
)
PURCHASE_CHANNEL_MIX = _normalized(
    {"Direct": 71.07, "Paid": 16.74, "Organic": 11.78, "Other": 0.31}
)
NONPURCHASE_CHANNEL_MIX = _normalized(
    {"Direct": 77.30, "Paid": 12.92, "Organic": 7.83, "Other": 1.05}
)
# Mon..Sun; purchase top-3 (Thu, Tue, Wed) sums to 0.4855
PURCHASE_WEEKDAYS = (0.131, 0.162, 0.158, 0.1655, 0.128, 0.1285, 0.127)
NONPURCHASE_WEEKDAYS = (0.1955, 0.0985, 0.20, 0.19, 0.109, 0.105, 0.102)

_PURCHASE_HOURS_RAW = (
    1.0, 0.5, 0.4, 0.4, 0.5, 0.8, 1.5, 2.5, 3.5, 4.5, 5.0, 5.0,
    5.0, 5.0, 5.0, 5.0, 5.0, 5.5, 7.5, 7.5, 7.0, 5.5, 3.5, 2.0,
)
_NONPURCHASE_HOURS_RAW = (
    1.2, 0.6, 0.5, 0.5, 0.6, 1.0, 2.0, 3.0, 4.0, 4.8, 5.0, 5.0,
    5.0, 5.0, 5.0, 5.0, 5.0, 5.2, 6.5, 6.5, 6.2, 5.2, 3.8, 2.4,
)
PURCHASE_HOURS = tuple(v / sum(_PURCHASE_HOURS_RAW) for v in _PURCHASE_HOURS_RAW)
NONPURCHASE_HOURS = tuple(v / sum(_NONPURCHASE_HOURS_RAW) for v in _NONPURCHASE_HOURS_RAW)

MULTI_DEVICE_SHARE_PURCHASERS = 0.2405
MULTI_DEVICE_SHARE_NONPURCHASERS = 0.1622

# tablet rate chosen so the mix-weighted purchase average lands on 3.16
PURCHASE_QUERY_RATES = {"Smartphone": 4.0, "PC": 2.0, "Tablet": 4.74, "GameConsole": 0.0, "TV": 0.0}
NONPURCHASE_QUERY_RATES = {"Smartphone": 0.05, "PC": 0.09, "Tablet": 0.0003, "GameConsole": 0.0, "TV": 0.0}

INITIAL_PAGE_DIST = {"home": 0.6, "search": 0.2, "category": 0.1, "product": 0.1}


def _page_chain(bias: dict) -> dict:
    """Row-stochastic page-type chain: uniform base plus boosted targets."""
    chain = {}
    for src in PAGE_TYPES:
        row = {p: 1.0 for p in PAGE_TYPES}
        for dst, boost in bias.get(src, {}).items():
            row[dst] += boost
        chain[src] = _normalized(row)
    return chain


PURCHASE_PAGE_CHAIN = _page_chain(
    {
        "home": {"search": 4, "product": 2},
        "search": {"product": 5},
        "product": {"basket": 3, "product": 2},
        "category": {"product": 4},
        "basket": {"checkout": 4, "product": 2},
        "checkout": {"product": 2, "basket": 1},
        "account": {"home": 2},
        "other": {"home": 2},
    }
)
NONPURCHASE_PAGE_CHAIN = _page_chain(
    {
        "home": {"category": 3, "search": 2},
        "search": {"product": 3, "search": 2},
        "product": {"category": 2, "home": 2},
        "category": {"product": 2, "category": 2},
        "basket": {"home": 2},
        "checkout": {"home": 2},
        "account": {"home": 2},
        "other": {"home": 2},
    }
)

# Disjoint high-probability chains used by plant_signal("dynamic", ...)
def _strong_chain(successors: dict) -> dict:
    chain = {}
    for src in PAGE_TYPES:
        row = {p: 0.1 / (len(PAGE_TYPES) - 1) for p in PAGE_TYPES}
        row.pop(successors[src])
        row[successors[src]] = 0.9
        chain[src] = row
    return chain


_DYNAMIC_PURCHASE_TARGET = _strong_chain(
    {
        "home": "search", "search": "product", "product": "basket",
        "basket": "checkout", "checkout": "product", "category": "product",
        "account": "home", "other": "search",
    }
)
_DYNAMIC_NONPURCHASE_TARGET = _strong_chain(
    {
        "home": "category", "search": "home", "product": "category",
        "basket": "home", "checkout": "home", "category": "home",
        "account": "other", "other": "account",
    }
)

_STATIC_PURCHASE_CHANNELS = {"Direct": 0.05, "Paid": 0.70, "Organic": 0.25, "Other": 0.0}
_STATIC_NONPURCHASE_CHANNELS = {"Direct": 0.90, "Paid": 0.0, "Organic": 0.0, "Other": 0.10}
_STATIC_PURCHASE_WEEKDAYS = (0.04, 0.25, 0.21, 0.30, 0.08, 0.06, 0.06)
_STATIC_NONPURCHASE_WEEKDAYS = (0.24, 0.04, 0.22, 0.04, 0.16, 0.15, 0.15)

# Example transition chain with a pronounced TV-to-PC switching pattern.
DEVICE_TRANSITIONS_EXAMPLE = {
    "PC": {"PC": 0.70, "Smartphone": 0.20, "Tablet": 0.08, "GameConsole": 0.01, "TV": 0.01},
    "Smartphone": {"PC": 0.22, "Smartphone": 0.65, "Tablet": 0.10, "GameConsole": 0.02, "TV": 0.01},
    "Tablet": {"PC": 0.25, "Smartphone": 0.15, "Tablet": 0.58, "GameConsole": 0.01, "TV": 0.01},
    "GameConsole": {"PC": 0.30, "Smartphone": 0.32, "Tablet": 0.03, "GameConsole": 0.33, "TV": 0.02},
    "TV": {"PC": 0.4375, "Smartphone": 0.25, "Tablet": 0.0625, "GameConsole": 0.0625, "TV": 0.1875},
}


@dataclass
class GenConfig:
    seed: int = 0
    n_customers: int = 1000
    anonymous_share: float = 0.565
    purchaser_share: float = 0.35
    # per-session purchase probability for purchaser customers (>=1 forced)
    purchase_rate: float = 0.30
    mean_sessions: float = 3.0
    purchase_length_mean: float = 48.14
    nonpurchase_length_mean: float = 6.16
    length_dispersion: float = 2.0
    min_session_length: int = 2
    max_session_length: int = 2000
    purchase_device_mix: dict = field(default_factory=lambda: dict(PURCHASE_DEVICE_MIX))
    nonpurchase_device_mix: dict = field(default_factory=lambda: dict(NONPURCHASE_DEVICE_MIX))
    purchase_channel_mix: dict = field(default_factory=lambda: dict(PURCHASE_CHANNEL_MIX))
    nonpurchase_channel_mix: dict = field(default_factory=lambda: dict(NONPURCHASE_CHANNEL_MIX))
    purchase_weekdays: tuple = PURCHASE_WEEKDAYS
    nonpurchase_weekdays: tuple = NONPURCHASE_WEEKDAYS
    purchase_hours: tuple = PURCHASE_HOURS
    nonpurchase_hours: tuple = NONPURCHASE_HOURS
    multi_device_share_purchasers: float = MULTI_DEVICE_SHARE_PURCHASERS
    multi_device_share_nonpurchasers: float = MULTI_DEVICE_SHARE_NONPURCHASERS
    device_transitions: dict | None = None  # optional planted chain, overrides mixes
    purchase_query_rates: dict = field(default_factory=lambda: dict(PURCHASE_QUERY_RATES))
    nonpurchase_query_rates: dict = field(default_factory=lambda: dict(NONPURCHASE_QUERY_RATES))
    purchase_page_chain: dict = field(default_factory=lambda: {k: dict(v) for k, v in PURCHASE_PAGE_CHAIN.items()})
    nonpurchase_page_chain: dict = field(default_factory=lambda: {k: dict(v) for k, v in NONPURCHASE_PAGE_CHAIN.items()})
    initial_page_dist: dict = field(default_factory=lambda: dict(INITIAL_PAGE_DIST))
    purchase_dwell_mu: float = 3.0  # lognormal, seconds
    nonpurchase_dwell_mu: float = 3.0
    dwell_sigma: float = 0.9
    # per-session latent pace: one Bernoulli per session shifts its whole
    # dwell distribution, so a page or two reveals everything it carries
    dwell_pace_gap: float = 0.0
    pace_rate_purchase: float = 0.0
    pace_rate_nonpurchase: float = 0.0
    late_login_share: float = 0.2
    query_vocab: int = 5000
    country: str = "NL"
    window_days: int = 28
    # history planting: short seeded first purchase per purchaser
    history_seed_sessions: bool = False

    def validate(self) -> None:
        def check_mix(name, mix, keys=None):
            total = sum(mix.values() if isinstance(mix, dict) else mix)
            if abs(total - 1.0) > 1e-9:
                raise InvalidConfig(name, f"probabilities sum to {total:.6f}, expected 1")
            vals = mix.values() if isinstance(mix, dict) else mix
            if any(v < 0 for v in vals):
                raise InvalidConfig(name, "negative probability")
            if keys is not None and isinstance(mix, dict):
                unknown = set(mix) - set(keys)
                if unknown:
                    raise InvalidConfig(name, f"unknown keys {sorted(unknown)}")

        check_mix("purchase_device_mix", self.purchase_device_mix, DEVICES)
        check_mix("nonpurchase_device_mix", self.nonpurchase_device_mix, DEVICES)
        check_mix("purchase_channel_mix", self.purchase_channel_mix, CHANNELS)
        check_mix("nonpurchase_channel_mix", self.nonpurchase_channel_mix, CHANNELS)
        check_mix("purchase_weekdays", self.purchase_weekdays)
        check_mix("nonpurchase_weekdays", self.nonpurchase_weekdays)
        check_mix("purchase_hours", self.purchase_hours)
        check_mix("nonpurchase_hours", self.nonpurchase_hours)
        check_mix("initial_page_dist", self.initial_page_dist, PAGE_TYPES)
        for name, chain in (
            ("purchase_page_chain", self.purchase_page_chain),
            ("nonpurchase_page_chain", self.nonpurchase_page_chain),
        ):
            for src, row in chain.items():
                check_mix(f"{name}[{src}]", row, PAGE_TYPES)
        if self.device_transitions is not None:
            for src, row in self.device_transitions.items():
                check_mix(f"device_transitions[{src}]", row, DEVICES)
        if self.dwell_pace_gap < 0:
            raise InvalidConfig("dwell_pace_gap", "must be >= 0")
        for name in (
            "anonymous_share", "purchaser_share", "purchase_rate", "late_login_share",
            "multi_device_share_purchasers", "multi_device_share_nonpurchasers",
            "pace_rate_purchase", "pace_rate_nonpurchase",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(name, f"{v} outside [0, 1]")
        for name, rates in (
            ("purchase_query_rates", self.purchase_query_rates),
            ("nonpurchase_query_rates", self.nonpurchase_query_rates),
        ):
            if any(v < 0 for v in rates.values()):
                raise InvalidConfig(name, "negative rate")
        if self.min_session_length < 2:
            raise InvalidConfig("min_session_length", "must be >= 2 to survive the ingest length filter")
        if self.max_session_length > 2000:
            raise InvalidConfig("max_session_length", "must be <= 2000 (ingest length filter)")
        if self.n_customers < 0:
            raise InvalidConfig("n_customers", "must be >= 0")


def _lerp_dict(a: dict, b: dict, s: float) -> dict:
    keys = list(a.keys())
    out = {k: (1 - s) * a[k] + s * b.get(k, 0.0) for k in keys}
    return _normalized(out)


def _lerp_tuple(a, b, s: float) -> tuple:
    out = [(1 - s) * x + s * y for x, y in zip(a, b)]
    total = sum(out)
    return tuple(v / total for v in out)


def plant_signal(cfg: GenConfig, kind: str, strength: float) -> GenConfig:
    """Correlate labels with static, dynamic or history structure.

    Effect size is monotone in strength; strength 0 returns an equal config.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must be in [0, 1]")
    if strength == 0.0:
        return replace(cfg)
    if kind == "static":
        return replace(
            cfg,
            purchase_channel_mix=_lerp_dict(cfg.purchase_channel_mix, _STATIC_PURCHASE_CHANNELS, strength),
            nonpurchase_channel_mix=_lerp_dict(cfg.nonpurchase_channel_mix, _STATIC_NONPURCHASE_CHANNELS, strength),
            purchase_weekdays=_lerp_tuple(cfg.purchase_weekdays, _STATIC_PURCHASE_WEEKDAYS, strength),
            nonpurchase_weekdays=_lerp_tuple(cfg.nonpurchase_weekdays, _STATIC_NONPURCHASE_WEEKDAYS, strength),
        )
    if kind == "dynamic":
        purchase_chain = {
            src: _lerp_dict(cfg.purchase_page_chain[src], _DYNAMIC_PURCHASE_TARGET[src], strength)
            for src in PAGE_TYPES
        }
        nonpurchase_chain = {
            src: _lerp_dict(cfg.nonpurchase_page_chain[src], _DYNAMIC_NONPURCHASE_TARGET[src], strength)
            for src in PAGE_TYPES
        }
        return replace(
            cfg,
            purchase_page_chain=purchase_chain,
            nonpurchase_page_chain=nonpurchase_chain,
            purchase_dwell_mu=cfg.purchase_dwell_mu + 0.8 * strength,
        )
    if kind == "history":
        return replace(
            cfg,
            history_seed_sessions=True,
            purchase_rate=0.4 + 0.6 * strength,
        )
    raise ValueError(f"unknown signal kind {kind!r}")


class _Sampler:
    """Cumulative-probability sampler over a fixed key order."""

    def __init__(self, mix: dict, order):
        self.keys = [k for k in order if mix.get(k, 0.0) > 0.0]
        probs = np.array([mix[k] for k in self.keys])
        self.cum = np.cumsum(probs / probs.sum())

    def draw(self, rng) -> str:
        return self.keys[int(np.searchsorted(self.cum, rng.random(), side="right"))]

    def draw_excluding(self, rng, excluded: str, max_tries: int = 64) -> str:
        if len(self.keys) < 2:
            return self.keys[0]
        for _ in range(max_tries):
            k = self.draw(rng)
            if k != excluded:
                return k
        return next(k for k in self.keys if k != excluded)


@dataclass
class _CustomerPlan:
    index: int
    purchaser: bool
    sticky: bool
    labels: list  # per-session purchase flags
    anonymous: list  # per-session anonymity flags
    seed_flags: list  # per-session short-seed markers


def _session_count(rng, cfg: GenConfig) -> int:
    # geometric around the configured mean, floored at 1
    mean = max(cfg.mean_sessions, 1.0)
    return int(rng.geometric(1.0 / mean)) if mean > 1.0 else 1


def _plan_customer(idx: int, rng, cfg: GenConfig) -> _CustomerPlan:
    purchaser = rng.random() < cfg.purchaser_share
    multi_share = (
        cfg.multi_device_share_purchasers if purchaser else cfg.multi_device_share_nonpurchasers
    )
    sticky = rng.random() >= multi_share
    n = max(_session_count(rng, cfg), 1 if sticky else 2)

    anonymous = [rng.random() < cfg.anonymous_share for _ in range(n)]
    need_identified = 1 if sticky else 2
    # iid flag appends keep the anonymous-share expectation exact (Wald)
    while sum(1 for a in anonymous if not a) < need_identified:
        anonymous.append(rng.random() < cfg.anonymous_share)
    n = len(anonymous)

    if purchaser:
        labels = [rng.random() < cfg.purchase_rate for _ in range(n)]
        identified_purchases = [i for i in range(n) if labels[i] and not anonymous[i]]
        if not identified_purchases:
            candidates = [i for i in range(n) if not anonymous[i]]
            labels[candidates[int(rng.integers(len(candidates)))]] = True
    else:
        labels = [False] * n

    seed_flags = [False] * n
    if purchaser and cfg.history_seed_sessions:
        labels.insert(0, True)
        anonymous.insert(0, False)
        seed_flags = [True] + seed_flags
    return _CustomerPlan(idx, purchaser, sticky, labels, anonymous, seed_flags)


def _roaming_session_laws(plan: _CustomerPlan, d_p: np.ndarray, d_n: np.ndarray):
    """Exact per-session device laws for a roaming customer, including the
    effect of the redraw that forces >= 2 distinct devices among identified
    sessions."""
    n = len(plan.labels)
    mixes = [d_p if plan.labels[i] else d_n for i in range(n)]
    ident = [i for i in range(n) if not plan.anonymous[i]]
    laws = [m.copy() for m in mixes]
    j = ident[-1]
    # q[d] = P(every identified session drew device d)
    q = np.ones_like(d_p)
    for i in ident:
        q = q * mixes[i]
    m_j = mixes[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(m_j < 1.0, q / (1.0 - m_j), 0.0)
    law_j = m_j - q + m_j * (ratio.sum() - ratio)
    laws[j] = law_j
    return laws


def _solve_sticky_mixes(plans, cfg: GenConfig):
    """Device distributions for sticky purchasers / non-purchasers such that
    both per-label device marginals match the configured mixes exactly in
    expectation, absorbing the roaming redraw bias."""
    d_p = np.array([cfg.purchase_device_mix.get(d, 0.0) for d in DEVICES])
    d_n = np.array([cfg.nonpurchase_device_mix.get(d, 0.0) for d in DEVICES])

    p_tot = 0  # purchase sessions overall
    n_tot = 0
    r_p = np.zeros(len(DEVICES))  # expected roaming device mass per label
    r_n = np.zeros(len(DEVICES))
    s_p = 0  # sticky purchasers: purchase / non-purchase session counts
    s_pn = 0
    s_n = 0  # sticky non-purchasers: all sessions
    for plan in plans:
        purchases = sum(1 for lab in plan.labels if lab)
        p_tot += purchases
        n_tot += len(plan.labels) - purchases
        if plan.sticky:
            if plan.purchaser:
                s_p += purchases
                s_pn += len(plan.labels) - purchases
            else:
                s_n += len(plan.labels)
        else:
            for law, lab in zip(_roaming_session_laws(plan, d_p, d_n), plan.labels):
                if lab:
                    r_p += law
                else:
                    r_n += law

    def _clip_norm(vec, fallback):
        vec = np.clip(vec, 0.0, None)
        total = vec.sum()
        if total <= 0:
            return fallback.copy()
        return vec / total

    sigma_p = _clip_norm(d_p * p_tot - r_p, d_p) if s_p else d_p.copy()
    sigma_n = (
        _clip_norm(d_n * n_tot - r_n - sigma_p * s_pn, d_n) if s_n else d_n.copy()
    )
    to_dict = lambda vec: {d: float(v) for d, v in zip(DEVICES, vec)}
    return to_dict(sigma_p), to_dict(sigma_n)


def _start_time(rng, prev_end: int | None, weekday: int, hour: int, cfg: GenConfig) -> int:
    """Earliest CET (weekday, hour) slot after the previous session plus gap."""
    if prev_end is None:
        floor_ms = WINDOW_START_MS + int(rng.integers(cfg.window_days)) * MS_PER_DAY
    else:
        floor_ms = prev_end + IDLE_GAP_MS + MS_PER_MINUTE
    day_cet = (floor_ms + CET_OFFSET_MS) // MS_PER_DAY
    offset_in_day = (
        hour * MS_PER_HOUR
        + int(rng.integers(60)) * MS_PER_MINUTE
        + int(rng.integers(60)) * MS_PER_SECOND
        + int(rng.integers(1000))
    )
    for day_offset in range(15):
        day = day_cet + day_offset
        if int((day + _EPOCH_WEEKDAY) % 7) != weekday:
            continue
        ts = int(day * MS_PER_DAY - CET_OFFSET_MS + offset_in_day)
        if ts >= floor_ms:
            return ts
    raise AssertionError("unreachable: weekday slot search exceeded two weeks")


def _dwell_ms(rng, mu: float, sigma: float) -> int:
    seconds = float(np.exp(rng.normal(mu, sigma)))
    seconds = min(max(seconds, 1.0), 1700.0)  # intra-session gaps stay under 30 min
    return int(seconds * MS_PER_SECOND)


def _session_length(rng, cfg: GenConfig, purchase: bool) -> int:
    mean = cfg.purchase_length_mean if purchase else cfg.nonpurchase_length_mean
    lo = cfg.min_session_length
    extra_mean = max(mean - lo, 0.05)
    n = cfg.length_dispersion
    p = n / (n + extra_mean)
    length = lo + int(rng.negative_binomial(n, p))
    return min(length, cfg.max_session_length)


def _build_session_events(
    rng, cfg: GenConfig, samplers,
    purchase: bool, device: str, channel: str, start_ms: int, is_seed: bool,
    token: str, customer_id: str | None,
):
    if is_seed:
        length = int(rng.integers(4, 9))
    else:
        length = _session_length(rng, cfg, purchase)
    reserved = 2 if purchase else 0
    core = max(length - reserved, 1)
    rate = (cfg.purchase_query_rates if purchase else cfg.nonpurchase_query_rates).get(device, 0.0)
    n_queries = int(rng.poisson(rate)) if rate > 0 else 0
    n_queries = min(n_queries, core - 1) if core > 1 else 0
    n_pages = core - n_queries

    chain = samplers["page_chain_p"] if purchase else samplers["page_chain_n"]
    pages = []
    cur = samplers["initial_page"].draw(rng)
    for _ in range(n_pages):
        pages.append(cur)
        cur = chain[cur].draw(rng)

    query_slots = set(
        int(i) for i in rng.choice(core, size=n_queries, replace=False)
    ) if n_queries else set()

    mu = cfg.purchase_dwell_mu if purchase else cfg.nonpurchase_dwell_mu
    if cfg.dwell_pace_gap > 0:
        pace_rate = cfg.pace_rate_purchase if purchase else cfg.pace_rate_nonpurchase
        if rng.random() < pace_rate:
            mu += cfg.dwell_pace_gap
    late_from = 0
    if customer_id is not None and length >= 2 and rng.random() < cfg.late_login_share:
        late_from = int(rng.integers(1, min(4, length)))

    events = []
    ts = start_ms
    page_i = 0
    for slot in range(core):
        cid = customer_id if slot >= late_from else None
        if slot in query_slots:
            events.append(RawEvent(
                timestamp=ts, client_token=token, customer_id=cid,
                device=device, channel=channel, action="Query", page_type="search",
                query_text=f"q{int(rng.integers(cfg.query_vocab))}",
                price=None, country=cfg.country,
            ))
        else:
            page = pages[page_i]
            page_i += 1
            price = int(rng.integers(500, 250_000)) if page == "product" else None
            events.append(RawEvent(
                timestamp=ts, client_token=token, customer_id=cid,
                device=device, channel=channel, action="PageView", page_type=page,
                query_text=None, price=price, country=cfg.country,
            ))
        ts += _dwell_ms(rng, mu, cfg.dwell_sigma)
    if purchase:
        events.append(RawEvent(
            timestamp=ts, client_token=token,
            customer_id=customer_id if core >= late_from else None,
            device=device, channel=channel, action="AddToBasket", page_type="basket",
            query_text=None, price=None, country=cfg.country,
        ))
        ts += _dwell_ms(rng, mu, cfg.dwell_sigma)
        events.append(RawEvent(
            timestamp=ts, client_token=token,
            customer_id=customer_id if core + 1 >= late_from else None,
            device=device, channel=channel, action="Purchase", page_type="checkout",
            query_text=None, price=int(rng.integers(500, 250_000)), country=cfg.country,
        ))
    return events


def _compile_samplers(cfg: GenConfig) -> dict:
    return {
        "device_p": _Sampler(cfg.purchase_device_mix, DEVICES),
        "device_n": _Sampler(cfg.nonpurchase_device_mix, DEVICES),
        "channel_p": _Sampler(cfg.purchase_channel_mix, CHANNELS),
        "channel_n": _Sampler(cfg.nonpurchase_channel_mix, CHANNELS),
        "weekday_p": _Sampler(dict(enumerate(cfg.purchase_weekdays)), range(7)),
        "weekday_n": _Sampler(dict(enumerate(cfg.nonpurchase_weekdays)), range(7)),
        "hour_p": _Sampler(dict(enumerate(cfg.purchase_hours)), range(24)),
        "hour_n": _Sampler(dict(enumerate(cfg.nonpurchase_hours)), range(24)),
        "initial_page": _Sampler(cfg.initial_page_dist, PAGE_TYPES),
        "page_chain_p": {s: _Sampler(cfg.purchase_page_chain[s], PAGE_TYPES) for s in PAGE_TYPES},
        "page_chain_n": {s: _Sampler(cfg.nonpurchase_page_chain[s], PAGE_TYPES) for s in PAGE_TYPES},
        "transitions": (
            {s: _Sampler(cfg.device_transitions[s], DEVICES) for s in cfg.device_transitions}
            if cfg.device_transitions
            else None
        ),
    }


def generate_events(cfg: GenConfig):
    """All events (globally time-sorted) plus the per-session truth sidecar."""
    cfg.validate()
    samplers = _compile_samplers(cfg)

    plans = []
    for idx in range(cfg.n_customers):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(idx, 0)))
        plans.append(_plan_customer(idx, rng, cfg))

    sigma_p, sigma_n = _solve_sticky_mixes(plans, cfg)
    sticky_p = _Sampler(sigma_p, DEVICES)
    sticky_np = _Sampler(sigma_n, DEVICES)
    device_index = {d: i for i, d in enumerate(DEVICES)}

    all_events = []
    truth = []
    for plan in plans:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(plan.index, 1)))
        n = len(plan.labels)
        customer_id = f"u{plan.index}"

        if samplers["transitions"] is not None:
            devices = []
            cur = DEVICES[int(rng.integers(len(DEVICES)))]
            for _ in range(n):
                devices.append(cur)
                cur = samplers["transitions"][cur].draw(rng)
        elif plan.sticky:
            sampler = sticky_p if plan.purchaser else sticky_np
            devices = [sampler.draw(rng)] * n
        else:
            devices = [
                (samplers["device_p"] if lab else samplers["device_n"]).draw(rng)
                for lab in plan.labels
            ]
            ident = [i for i in range(n) if not plan.anonymous[i]]
            if len({devices[i] for i in ident}) < 2:
                last = ident[-1]
                sampler = samplers["device_p"] if plan.labels[last] else samplers["device_n"]
                devices[last] = sampler.draw_excluding(rng, devices[last])

        prev_end = None
        for k in range(n):
            purchase = plan.labels[k]
            anonymous = plan.anonymous[k]
            is_seed = plan.seed_flags[k]
            device = devices[k]
            channel = (samplers["channel_p"] if purchase else samplers["channel_n"]).draw(rng)
            weekday = int((samplers["weekday_p"] if purchase else samplers["weekday_n"]).draw(rng))
            hour = int((samplers["hour_p"] if purchase else samplers["hour_n"]).draw(rng))
            start_ms = _start_time(rng, prev_end, weekday, hour, cfg)
            token = f"c{plan.index}d{device_index[device]}"
            events = _build_session_events(
                rng, cfg, samplers, purchase, device, channel, start_ms,
                is_seed, token, None if anonymous else customer_id,
            )
            prev_end = events[-1].timestamp
            all_events.extend(events)
            truth.append(
                {
                    "client_token": token,
                    "customer_id": None if anonymous else customer_id,
                    "device": device,
                    "channel": channel,
                    "purchase": purchase,
                    "start_ms": events[0].timestamp,
                    "end_ms": events[-1].timestamp,
                    "n_events": len(events),
                    "seed_session": is_seed,
                }
            )

    all_events.sort(key=lambda e: (e.timestamp, e.client_token))
    return all_events, truth


def event_to_tsv(e: RawEvent) -> str:
    return "\t".join(
        (
            str(e.timestamp),
            e.client_token,
            e.customer_id or "",
            e.device,
            e.channel,
            e.action,
            e.page_type,
            e.query_text or "",
            "" if e.price is None else str(e.price),
            e.country,
        )
    )


def generate(cfg: GenConfig, out_dir) -> dict:
    """Write events.tsv + truth.jsonl; byte-identical for identical (cfg, seed)."""
    events, truth = generate_events(cfg)
    os.makedirs(out_dir, exist_ok=True)
    events_path = os.path.join(out_dir, "events.tsv")
    truth_path = os.path.join(out_dir, "truth.jsonl")
    with open(events_path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(event_to_tsv(e))
            fh.write("\n")
    with open(truth_path, "w", encoding="utf-8") as fh:
        for rec in truth:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    return {
        "events_path": events_path,
        "truth_path": truth_path,
        "n_events": len(events),
        "n_sessions": len(truth),
    }


def generate_sessions(cfg: GenConfig):
    """Generate and sessionize in memory; returns (sessions, truth)."""
    events, truth = generate_events(cfg)
    return sessionize(events), truth
