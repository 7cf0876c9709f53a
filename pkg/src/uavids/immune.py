"""Immune-inspired anomaly core: detectors trained by negative selection.

A detector is a point in feature space with a match radius. Training draws
random candidates and censors any that match a known-benign ("self") sample;
classification declares a monitored vector anomalous when any surviving
detector matches it. Detectors that match real anomalies are preferentially
cloned and mutated (clonal selection), with clones re-censored against the
self set so the detector population never learns to flag benign traffic.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

MANHATTAN = "manhattan"
HAMMING = "hamming"
EUCLIDEAN = "euclidean"


def affinity(r, s, metric=EUCLIDEAN):
    """Distance between two equal-length vectors; smaller = stronger match."""
    if len(r) != len(s):
        raise ValueError(f"vector length mismatch: {len(r)} vs {len(s)}")
    if metric == MANHATTAN:
        return sum(abs(a - b) for a, b in zip(r, s))
    if metric == HAMMING:
        return sum(1 for a, b in zip(r, s) if a != b)
    if metric == EUCLIDEAN:
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(r, s)))
    raise ValueError(f"unknown affinity metric {metric!r}")


@dataclass
class Detector:
    center: tuple
    radius: float
    metric: str = EUCLIDEAN
    generation: int = 0
    stimulation: int = 0

    def matches(self, vector):
        return affinity(vector, self.center, self.metric) <= self.radius


@dataclass
class DetectorSet:
    detectors: list = field(default_factory=list)
    capacity: int = 200


class TrainingCoverageError(RuntimeError):
    """Self samples cover the space so densely that training stalled.

    Carries whatever detectors were found before the attempt cap was hit.
    """

    def __init__(self, achieved, requested, detector_set):
        super().__init__(f"trained {achieved} of {requested} detectors before the attempt cap")
        self.achieved = achieved
        self.requested = requested
        self.detector_set = detector_set


def _uniform_sampler(dim):
    def draw(rng):
        return tuple(rng.random() for _ in range(dim))
    return draw


def train_detectors(self_set, ni, radius, rng, metric=EUCLIDEAN, dim=3,
                    max_attempts=1_000_000, sampler=None):
    """Generate ni detectors, none of which matches any self sample.

    Candidates are drawn uniformly (or via `sampler` for discrete spaces) and
    discarded when within `radius` of a self sample. Raises
    TrainingCoverageError if the attempt cap is reached first.
    """
    if not self_set:
        raise ValueError("self set must be nonempty")
    if ni < 1:
        raise ValueError("detector count must be >= 1")
    draw = sampler or _uniform_sampler(dim)
    detectors = []
    seen = set()
    attempts = 0
    while len(detectors) < ni and attempts < max_attempts:
        attempts += 1
        center = draw(rng)
        if center in seen:
            continue
        if any(affinity(s, center, metric) <= radius for s in self_set):
            continue
        seen.add(center)
        detectors.append(Detector(center=center, radius=radius, metric=metric))
    det_set = DetectorSet(detectors=detectors, capacity=ni)
    if len(detectors) < ni:
        raise TrainingCoverageError(len(detectors), ni, det_set)
    return det_set


def _matches_fast(det, vector):
    # Euclidean 3-component fast path; the generic path covers the rest.
    if det.metric == EUCLIDEAN and len(vector) == 3 and len(det.center) == 3:
        c = det.center
        d0 = vector[0] - c[0]
        d1 = vector[1] - c[1]
        d2 = vector[2] - c[2]
        return d0 * d0 + d1 * d1 + d2 * d2 <= det.radius * det.radius
    return det.matches(vector)


def classify(vector, det_set):
    """True when the vector is non-self, i.e. matched by any detector."""
    for d in det_set.detectors:
        if _matches_fast(d, vector):
            return True
    return False


def matching_detectors(vector, det_set):
    return [d for d in det_set.detectors if _matches_fast(d, vector)]


def clonal_select(det_set, matched, rng, self_set, top_k=5, mutation_scale=0.5):
    """Expand the detector population around detectors that matched anomalies.

    `matched` is a list of (detector, vector) pairs from this epoch. Matching
    detectors are ranked by affinity (closest first); the top k are cloned with
    rank-proportional copy counts and Gaussian-mutated, with tighter mutation
    for tighter matches. Clones that would match a self sample are discarded,
    and the lowest-stimulation detectors are evicted to respect capacity.
    """
    if not matched:
        return det_set
    by_detector = {}
    for det, vec in matched:
        d = affinity(vec, det.center, det.metric)
        prev = by_detector.get(id(det))
        if prev is None or d < prev[1]:
            by_detector[id(det)] = (det, d)
        det.stimulation += 1
    ranked = sorted(by_detector.values(), key=lambda pair: pair[1])[:top_k]

    clones = []
    k = len(ranked)
    for rank, (det, dist) in enumerate(ranked):
        copies = k - rank
        sigma = mutation_scale * max(dist, 1e-3)
        for _ in range(copies):
            center = tuple(
                min(1.0, max(0.0, c + rng.gauss(0.0, sigma))) for c in det.center
            )
            if any(affinity(s, center, det.metric) <= det.radius for s in self_set):
                continue
            clones.append(
                Detector(center=center, radius=det.radius, metric=det.metric,
                         generation=det.generation + 1)
            )

    pool = det_set.detectors + clones
    if len(pool) > det_set.capacity:
        # Stable eviction: keep the most stimulated, oldest-inserted first.
        indexed = list(enumerate(pool))
        indexed.sort(key=lambda iv: (-iv[1].stimulation, iv[0]))
        pool = [v for _, v in indexed[: det_set.capacity]]
    det_set.detectors = pool
    return det_set


def export_detectors_csv(det_set, path):
    """Write detectors (center components, radius, generation) for inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = len(det_set.detectors[0].center) if det_set.detectors else 3
        writer.writerow([f"c{i}" for i in range(dim)] + ["radius", "generation"])
        for det in det_set.detectors:
            writer.writerow([f"{c:.6f}" for c in det.center] + [f"{det.radius:.6f}", det.generation])


@dataclass
class MemoryEntry:
    route: object
    stored_at: float


class SafetyMemory:
    """Recently vetted routes, reusable until they expire or break."""

    def __init__(self, ttl=11.0):
        self.ttl = ttl
        self._entries = {}

    def store(self, src, dst, route, now):
        self._entries[(src, dst)] = MemoryEntry(route=route, stored_at=now)

    def lookup(self, src, dst, now, hops_ok=None):
        """Stored route if present, unexpired and still geometrically intact."""
        entry = self._entries.get((src, dst))
        if entry is None:
            return None
        if now > entry.stored_at + self.ttl:
            del self._entries[(src, dst)]
            return None
        if hops_ok is not None and not hops_ok(entry.route):
            del self._entries[(src, dst)]
            return None
        return entry.route

    def evict(self, src, dst):
        self._entries.pop((src, dst), None)

    def __len__(self):
        return len(self._entries)
