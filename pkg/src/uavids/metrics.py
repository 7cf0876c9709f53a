"""Confusion-matrix accounting over node verdicts and packet-delivery tallies.

The positive class is "malicious". A node counts as flagged when it sits on
the network-wide suspect set at the end of a run. Rates with an empty
denominator are reported as None (not applicable), never as zero.
"""

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def total(self):
        return self.tp + self.tn + self.fp + self.fn


def classify_and_count(truth, flagged):
    """Score a flagged-node set against ground truth.

    `truth` maps node id -> bool (malicious); `flagged` is the final suspect
    set. Every flagged id must be covered by the truth map.
    """
    unknown = set(flagged) - set(truth)
    if unknown:
        raise ValueError(f"verdict for unknown node(s): {sorted(unknown)}")
    c = ConfusionCounts()
    for node_id, malicious in truth.items():
        hit = node_id in flagged
        if malicious and hit:
            c.tp += 1
        elif malicious:
            c.fn += 1
        elif hit:
            c.fp += 1
        else:
            c.tn += 1
    return c


def compute_rates(c):
    """(fpr, fnr, dr) in percent; None where the denominator is zero.

    fnr is derived as the exact complement of dr so that dr + fnr == 100
    holds with no floating error whenever any malicious node exists.
    """
    fpr = 100.0 * c.fp / (c.fp + c.tn) if (c.fp + c.tn) > 0 else None
    dr = 100.0 * c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    fnr = (100.0 - dr) if dr is not None else None
    return fpr, fnr, dr


def pdr_per_run(received, sent):
    if sent <= 0:
        raise ValueError("packet delivery ratio undefined with zero packets sent")
    return 100.0 * received / sent


def pdr_mean(pairs):
    """Mean of per-experiment delivery ratios (scale-safe headline form)."""
    if not pairs:
        raise ValueError("no experiments")
    return sum(pdr_per_run(x, y) for x, y in pairs) / len(pairs)


def pdr_grand_ratio(pairs):
    """(1/n) * (sum received / sum sent) * 100, the literal averaged-totals form."""
    if not pairs:
        raise ValueError("no experiments")
    total_sent = sum(y for _, y in pairs)
    if total_sent <= 0:
        raise ValueError("packet delivery ratio undefined with zero packets sent")
    total_recv = sum(x for x, _ in pairs)
    return 100.0 * total_recv / total_sent / len(pairs)


@dataclass
class RunResult:
    scenario: str
    defense: str
    seed: int
    n_uavs: int
    sim_time: float
    malicious_ratio: float
    t_s: float
    attack: str
    confusion: ConfusionCounts = field(default_factory=ConfusionCounts)
    fpr: Optional[float] = None
    fnr: Optional[float] = None
    dr: Optional[float] = None
    sent: int = 0
    received: int = 0
    failure: str = ""

    @property
    def pdr(self):
        return pdr_per_run(self.received, self.sent) if self.sent > 0 else None

    def sort_key(self):
        return (
            self.scenario, self.defense, self.attack, self.n_uavs,
            self.sim_time, self.malicious_ratio, self.t_s, self.seed,
        )


CSV_COLUMNS = [
    "scenario", "seed", "n_uavs", "malicious_ratio", "t_s", "attack",
    "fpr", "fnr", "dr", "pdr_mean", "pdr_eq8", "sent", "received",
    # appended past the base schema: needed to tell baseline runs apart and
    # to read time-swept cells
    "defense", "sim_time",
]


def _fmt(value):
    if value is None:
        return "na"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def result_to_csv_row(r):
    pdr = r.pdr
    return [
        r.scenario, str(r.seed), str(r.n_uavs), _fmt(float(r.malicious_ratio)),
        _fmt(float(r.t_s)), r.attack, _fmt(r.fpr), _fmt(r.fnr), _fmt(r.dr),
        _fmt(pdr), _fmt(pdr), str(r.sent), str(r.received),
        r.defense, _fmt(float(r.sim_time)),
    ]
