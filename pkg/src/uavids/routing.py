"""Message, route and packet types for on-demand route discovery.

Discovery floods a route request; every route reply that reaches the source
within the collection window becomes one candidate Route carrying measured
round-trip time, the weakest per-hop signal level seen on the reply, the
claimed hop count, and per-hop transmitter observations used by the defense.
"""

from dataclasses import dataclass, field
from typing import Optional

RREQ = "rreq"
RREP = "rrep"
HELLO = "hello"
HELLO_ACK = "hello-ack"
QUERY_REQ = "query-req"
QUERY_RESP = "query-resp"
LINK_FAIL = "link-fail"

CANDIDATE = "candidate"
REJECTED = "rejected"
SELECTED = "selected"

DROP_MALICIOUS = "malicious"
DROP_LINK_BROKEN = "link-broken"
DROP_NO_ROUTE = "no-route"
DROP_BUFFER_OVERFLOW = "buffer-overflow"


@dataclass
class ControlMsg:
    kind: str
    origin: int
    target: int
    hop_count: int = 0
    dest_seq: int = 0
    path: tuple = ()
    claimed_position: Optional[tuple] = None
    timestamp: float = 0.0
    # discovery bookkeeping
    flood_id: int = 0
    # running measurements accumulated along a reply:
    #   observations: (transmitter id, inferred tx power dBm) per hop
    #   min_ssi_dbm: weakest raw reception level seen so far
    observations: tuple = ()
    min_ssi_dbm: float = float("inf")


@dataclass
class Route:
    path: tuple
    rtt: float = 0.0
    min_ssi_dbm: float = 0.0
    hop_count: int = 0
    reply_arrival: float = 0.0
    dest_seq: int = 0
    observations: tuple = ()
    p_m: float = 0.0
    status: str = CANDIDATE

    @property
    def src(self):
        return self.path[0]

    @property
    def dst(self):
        return self.path[-1]

    def hops(self):
        return len(self.path) - 1

    def hop_claim_consistent(self):
        return self.hop_count == self.hops()


@dataclass
class DataPacket:
    src: int
    dst: int
    seq: int
    size: int = 512
    route: tuple = ()
    hop_index: int = 0
    corrupted: bool = False
    flow_id: int = 0
    sent_at: float = 0.0


@dataclass
class PacketCounters:
    """Per directed link: data packets the transmitter reports having sent."""

    sent: dict = field(default_factory=dict)

    def increment(self, u, v):
        key = (u, v)
        self.sent[key] = self.sent.get(key, 0) + 1

    def get(self, u, v):
        return self.sent.get((u, v), 0)
