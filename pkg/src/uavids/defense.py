"""Route vetting pipeline: probe scoring, reverse packet-count audits,
signal anomaly filtering, fitness ranking and final secure-route selection.

The functions here are pure: the event-driven world gathers probe outcomes,
query responses and signal observations, and this module turns them into
contamination scores, suspect pairs and a route choice. Keeping them pure
makes every rule testable against hand-computed cases.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

from .immune import classify
from .netmodel import dbm_to_linear

PM_MIN = 0.0
PM_MAX = 100.0
PM_ACK_DELTA = 25.0
PM_SILENT_DELTA = 15.0
PM_REJECT_THRESHOLD = 50.0
PROBE_COUNT = 4

# Rejection / push-out reasons recorded in the decision log.
REASON_PROBES = "probe-failures"
REASON_SUSPECT = "suspect-on-path"
REASON_NONSELF = "detector-nonself"
REASON_CONTAMINATION = "contamination"
REASON_BLACKLIST = "blacklisted-path"


def phase1_update(p_m, acked):
    """One probe outcome applied to a contamination score, clamped to [0, 100]."""
    p_m = p_m - PM_ACK_DELTA if acked else p_m + PM_SILENT_DELTA
    return min(PM_MAX, max(PM_MIN, p_m))


def phase1_outcome(confirmed, acks):
    """Final (p_m, rejected) for an initial confirmation bit and probe pattern.

    A confirmed route starts at 0, an unconfirmed one at 100; each ack deducts
    25 units and each silence adds 15, clamping after every step. Routes ending
    above 50 are rejected.
    """
    p_m = PM_MIN if confirmed else PM_MAX
    for acked in acks:
        p_m = phase1_update(p_m, acked)
    return p_m, p_m > PM_REJECT_THRESHOLD


def ssi_filter(received, delta):
    """Flag the transmitter whose signal stands anomalously above the rest.

    `received` is a list of (node id, signal level). With the strongest level
    s_max and the runner-up second_max, the argmax node is flagged when
    s_max - second_max > delta. Single observations never flag.
    """
    if len(received) < 2:
        return set()
    best_node, best = received[0]
    second = -math.inf
    for node_id, ssi in received[1:]:
        if ssi > best:
            second = best
            best_node, best = node_id, ssi
        elif ssi > second:
            second = ssi
    if best - second > delta:
        return {best_node}
    return set()


@dataclass
class ProbeLedger:
    """Per-route probe bookkeeping for the hello phase."""

    p_m: float = 0.0
    probes_sent: int = 0
    acks: int = 0
    pattern: list = field(default_factory=list)

    def record(self, acked):
        if self.probes_sent >= PROBE_COUNT:
            raise ValueError("probe budget exhausted")
        self.probes_sent += 1
        if acked:
            self.acks += 1
        self.pattern.append(acked)
        self.p_m = phase1_update(self.p_m, acked)

    def done(self):
        return self.probes_sent >= PROBE_COUNT

    def rejected(self):
        return self.p_m > PM_REJECT_THRESHOLD


@dataclass
class AuditReport:
    """Outcome of one reverse packet-count walk along a delivery route."""

    path: tuple
    n_s: int
    pair_scores: list = field(default_factory=list)   # ((u, v), p_sb)
    suspects: set = field(default_factory=set)
    immune: frozenset = frozenset()

    def suspects_at(self, t_s):
        """Suspect set this walk would have produced at threshold t_s."""
        out = set()
        for (u, v), p_sb in self.pair_scores:
            if p_sb > t_s:
                out.add(u)
                out.add(v)
        return out - self.immune


def phase2_audit(path, reports, n_s, t_s, delivered, immune_ids=frozenset()):
    """Evaluate per-pair subversive-behavior scores from sent-packet reports.

    `path` runs source..destination, `reports` maps each non-destination path
    node to the packet count it claims to have sent to its next hop (None for
    an unresponsive node), `n_s` is the source's own sent count and `delivered`
    the destination's arrival count, which stands in for the final link.

    For each consecutive pair (upstream, mid) the score is
    (sent upstream->mid - sent mid->downstream) / n_s; both members of a pair
    scoring above t_s (strictly) become suspects. An unresponsive node and its
    downstream partner are recorded with the maximal score. `immune_ids` names
    the auditing parties themselves (the flow's ground stations), which are
    never suspected: the walk audits intermediate forwarding behavior.
    """
    if n_s <= 0:
        raise ValueError("audit requires at least one data packet sent")
    k = len(path) - 1  # destination index
    spc = {}
    for i in range(k):
        spc[i] = reports.get(path[i])
    spc[k - 1] = delivered  # the destination trusts its own arrival count

    report = AuditReport(path=tuple(path), n_s=n_s, immune=frozenset(immune_ids))
    for i in range(k):
        if spc[i] is None:
            downstream = path[i + 1]
            report.pair_scores.append(((path[i], downstream), 1.0))
            continue
        if i + 1 >= k:
            continue
        if spc[i + 1] is None:
            continue  # covered by the silence rule above
        p_sb = (spc[i] - spc[i + 1]) / n_s
        report.pair_scores.append(((path[i], path[i + 1]), p_sb))

    report.suspects = report.suspects_at(t_s)
    return report


def fitness(rtt, ssi, max_rtt, max_ssi):
    """Route fitness: normalized inverse round-trip time plus normalized signal.

    Signal values must be on a positive linear scale. Higher is better; the
    best-possible route in a set scores 2.0.
    """
    if rtt <= 0 or max_rtt <= 0:
        raise ValueError("round-trip times must be positive")
    if ssi <= 0 or max_ssi <= 0:
        raise ValueError("signal levels must be positive on the linear scale")
    return (max_rtt / rtt) + (ssi / max_ssi)


def fitness_for_set(routes):
    """F_r for every route, normalized over the candidate set. Returns a dict."""
    if not routes:
        raise ValueError("candidate set must be nonempty")
    max_rtt = max(r.rtt for r in routes)
    max_ssi = max(dbm_to_linear(r.min_ssi_dbm) for r in routes)
    return {
        id(r): fitness(r.rtt, dbm_to_linear(r.min_ssi_dbm), max_rtt, max_ssi)
        for r in routes
    }


@dataclass
class SelectionDecision:
    winner: Optional[object]
    rejected: list = field(default_factory=list)      # (route, reason)
    advisories: list = field(default_factory=list)    # low-score survivors
    scores: dict = field(default_factory=dict)        # id(route) -> UAV_SR


def select_immune_route(routes, suspects, detectors=None, features=None,
                        fr_override=None, tie_eps=1e-6, advisory_threshold=0.5):
    """Pick the best vetted route, pushing out contaminated or flagged ones.

    Each route's contamination score is normalized to [0, 1]. Routes above 0.5,
    routes with a suspect on the path, and routes whose feature vector the
    detector set classifies as non-self are rejected. Survivors are scored
    (1 - p) * F_r; the maximum wins, with ties within `tie_eps` broken by the
    earliest reply arrival. Survivors scoring below `advisory_threshold` are
    reported as advisories. Returns a SelectionDecision with winner None when
    nothing survives.
    """
    decision = SelectionDecision(winner=None)
    if not routes:
        return decision

    survivors = []
    for route in routes:
        p = route.p_m / PM_MAX
        if p > 0.5:
            decision.rejected.append((route, REASON_CONTAMINATION))
        elif suspects and any(n in suspects for n in route.path):
            decision.rejected.append((route, REASON_SUSPECT))
        elif (
            detectors is not None
            and features is not None
            and id(route) in features
            and classify(features[id(route)], detectors)
        ):
            decision.rejected.append((route, REASON_NONSELF))
        else:
            survivors.append(route)

    if not survivors:
        return decision

    fr = fr_override if fr_override is not None else fitness_for_set(survivors)
    best = None
    best_score = -math.inf
    for route in survivors:
        score = (1.0 - route.p_m / PM_MAX) * fr[id(route)]
        decision.scores[id(route)] = score
        if score < advisory_threshold:
            decision.advisories.append(route)
        if (
            best is None
            or score > best_score + tie_eps
            or (abs(score - best_score) <= tie_eps and route.reply_arrival < best.reply_arrival)
        ):
            best = route
            best_score = score
    decision.winner = best
    return decision


def route_features(route, candidates, pair_psb):
    """Feature vector (rtt_norm, ssi_norm, reverse-count score) for a route.

    Normalization is over the candidate set; the reverse-count score is one
    minus the worst subversive-behavior score previously observed for any
    consecutive pair along the path (1.0 when nothing is known against it).
    """
    max_rtt = max(r.rtt for r in candidates)
    max_ssi = max(dbm_to_linear(r.min_ssi_dbm) for r in candidates)
    rtt_norm = route.rtt / max_rtt if max_rtt > 0 else 1.0
    ssi_norm = dbm_to_linear(route.min_ssi_dbm) / max_ssi if max_ssi > 0 else 1.0
    worst = 0.0
    path = route.path
    for i in range(len(path) - 1):
        p_sb = pair_psb.get((path[i], path[i + 1]), 0.0)
        if p_sb > worst:
            worst = p_sb
    score = 1.0 - min(1.0, max(0.0, worst))
    return (min(1.0, max(0.0, rtt_norm)), min(1.0, max(0.0, ssi_norm)), score)
