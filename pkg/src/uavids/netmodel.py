"""Static network substrate: node placement, link geometry and signal strength.

Nodes live in a finite axis-aligned box. Airborne UAVs are placed uniformly
at random (a fixed-count realization of a homogeneous spatial point process);
ground stations sit on the region floor. Received signal strength follows a
log-distance path-loss law with a 1 m reference distance.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

REFERENCE_DISTANCE_M = 1.0

# Node roles. Wormhole nodes carry a peer id, gray holes a drop probability;
# both live as extra fields on UavNode.
class Role:
    NORMAL = "normal"
    GROUND_STATION = "ground-station"
    WORMHOLE = "wormhole"
    BLACK_HOLE = "black-hole"
    GRAY_HOLE = "gray-hole"
    FID = "fid"

MALICIOUS_ROLES = frozenset({Role.WORMHOLE, Role.BLACK_HOLE, Role.GRAY_HOLE, Role.FID})


@dataclass
class Box:
    xmin: float = 0.0
    xmax: float = 0.0
    ymin: float = 0.0
    ymax: float = 0.0
    zmin: float = 0.0
    zmax: float = 0.0

    @classmethod
    def of_size(cls, x, y, z):
        return cls(0.0, float(x), 0.0, float(y), 0.0, float(z))

    def volume(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin) * (self.zmax - self.zmin)

    def contains(self, p):
        return (
            self.xmin <= p[0] <= self.xmax
            and self.ymin <= p[1] <= self.ymax
            and self.zmin <= p[2] <= self.zmax
        )


@dataclass
class UavNode:
    id: int
    position: tuple
    velocity: tuple = (0.0, 0.0, 0.0)
    role: str = Role.NORMAL
    tx_power_dbm: float = 20.0
    wh_peer: Optional[int] = None
    gh_drop_prob: float = 0.0
    routing_table: dict = field(default_factory=dict)

    def is_airborne(self):
        return self.role != Role.GROUND_STATION

    def is_malicious(self):
        return self.role in MALICIOUS_ROLES


@dataclass
class Topology:
    nodes: list
    region: Box
    comm_range: float

    def node(self, node_id):
        if 0 <= node_id < len(self.nodes):
            return self.nodes[node_id]
        raise KeyError(f"unknown node id {node_id}")

    def airborne_ids(self):
        return [n.id for n in self.nodes if n.is_airborne()]


def distance(a, b):
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def ppp_deploy(n, region, rng, comm_range=300.0, tx_power_dbm=20.0):
    """Place n nodes uniformly i.i.d. in the region; deterministic given rng.

    Raises ValueError for an empty region or a non-positive count.
    """
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    if region.volume() <= 0.0:
        raise ValueError("deployment region must have positive volume")
    nodes = []
    for i in range(n):
        pos = (
            rng.uniform(region.xmin, region.xmax),
            rng.uniform(region.ymin, region.ymax),
            rng.uniform(region.zmin, region.zmax),
        )
        nodes.append(UavNode(id=i, position=pos, tx_power_dbm=tx_power_dbm))
    return Topology(nodes=nodes, region=region, comm_range=comm_range)


def add_ground_stations(topo, count, tx_power_dbm=20.0):
    """Append ground stations at quarter-point positions on the region floor."""
    r = topo.region
    spots = [(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75), (0.5, 0.5)]
    base = len(topo.nodes)
    for k in range(count):
        fx, fy = spots[k % len(spots)]
        pos = (
            r.xmin + fx * (r.xmax - r.xmin),
            r.ymin + fy * (r.ymax - r.ymin),
            r.zmin,
        )
        topo.nodes.append(
            UavNode(id=base + k, position=pos, role=Role.GROUND_STATION, tx_power_dbm=tx_power_dbm)
        )
    return topo


def neighbors(topo, node_id):
    """Ids of all nodes within comm_range of node_id, excluding itself."""
    center = topo.node(node_id).position
    rng2 = topo.comm_range * topo.comm_range
    out = set()
    cx, cy, cz = center
    for other in topo.nodes:
        if other.id == node_id:
            continue
        p = other.position
        dx = p[0] - cx
        dy = p[1] - cy
        dz = p[2] - cz
        if dx * dx + dy * dy + dz * dz <= rng2:
            out.add(other.id)
    return out


def path_loss_db(d, exponent=2.0):
    """Log-distance path loss relative to the 1 m reference."""
    if d < REFERENCE_DISTANCE_M:
        d = REFERENCE_DISTANCE_M
    return 10.0 * exponent * math.log10(d / REFERENCE_DISTANCE_M)


def rx_signal_strength(tx, rx_pos, exponent=2.0):
    """Received signal strength in dBm at rx_pos for a transmission from tx.

    Coincident positions are clamped to the reference distance.
    """
    return tx.tx_power_dbm - path_loss_db(distance(tx.position, rx_pos), exponent)


def inferred_tx_power_dbm(measured_dbm, claimed_distance, exponent=2.0):
    """Transmit power implied by a measurement and the claimed distance.

    For a truthful transmitter this recovers its configured power; a node
    lying about its position or boosting its transmitter stands out.
    """
    return measured_dbm + path_loss_db(claimed_distance, exponent)


def dbm_to_linear(dbm):
    """dBm to linear milliwatts; used wherever ratios of signal levels are taken."""
    return 10.0 ** (dbm / 10.0)


def receive_threshold_dbm(tx_power_dbm, comm_range, exponent=2.0):
    """Sensitivity such that a standard transmitter is heard out to comm_range."""
    return tx_power_dbm - path_loss_db(comm_range, exponent)
