"""Malicious node behaviors, applied as interceptors on routing events.

Four behaviors are modeled. A black hole answers any route request with a
forged too-good reply and then drops every data packet. A gray hole joins
discovery honestly but drops data probabilistically. A wormhole pair tunnels
control traffic between two distant points without counting the tunnel hop,
faking adjacency, then swallows the data it captures. A fake-information node
lies about its position, transmits with boosted power and corrupts message
contents it forwards.

Role assignment is nested across malicious ratios: one fixed permutation per
seed decides the order in which nodes turn malicious, and each node's attack
type comes from its own stream, so raising the ratio only adds attackers
without reshuffling the existing ones.
"""

import math
from dataclasses import dataclass, field

from .netmodel import Role

WH = "wh"
BH = "bh"
GH = "gh"
FID = "fid"
ATTACK_KEYS = (WH, BH, GH, FID)

FORGED_SEQ_BUMP = 100

ROLE_BY_KEY = {
    WH: Role.WORMHOLE,
    BH: Role.BLACK_HOLE,
    GH: Role.GRAY_HOLE,
    FID: Role.FID,
}


@dataclass
class AttackConfig:
    malicious_ratio: float = 0.0
    attack_mix: dict = field(default_factory=lambda: {WH: 0.25, BH: 0.25, GH: 0.25, FID: 0.25})
    gh_drop_prob: float = 0.5
    wh_tunnel_latency: float = 0.0001   # s, far below a real hop
    wh_drop_prob: float = 1.0           # data entering the tunnel after capture
    fid_ssi_boost: float = 15.0         # dB over the standard transmitter
    fid_pos_error: float = 500.0        # m of claimed-position displacement
    fid_control_mod_rate: float = 1.0
    fid_data_mod_rate: float = 0.2

    def validate(self):
        if not (0.0 <= self.malicious_ratio <= 0.30):
            raise ValueError(f"malicious_ratio must be in [0, 0.30], got {self.malicious_ratio}")
        if not (0.0 < self.gh_drop_prob < 1.0):
            raise ValueError(f"gh_drop_prob must lie strictly in (0, 1), got {self.gh_drop_prob}")
        bad = set(self.attack_mix) - set(ATTACK_KEYS)
        if bad:
            raise ValueError(f"unknown attack keys in mix: {sorted(bad)}")
        if not self.attack_mix or sum(self.attack_mix.values()) <= 0:
            raise ValueError("attack_mix must have positive total weight")


def attack_type_sequence(weights, length):
    """Deterministic balanced interleaving of attack types.

    Position k gets the type with the largest assignment deficit, so every
    prefix of the sequence matches the requested mix as closely as integer
    counts allow. Raising the malicious count then only appends attackers
    without re-typing existing ones.
    """
    total = sum(weights.values())
    shares = {k: weights.get(k, 0.0) / total for k in ATTACK_KEYS}
    assigned = {k: 0 for k in ATTACK_KEYS}
    seq = []
    for pos in range(1, length + 1):
        best = max(ATTACK_KEYS, key=lambda k: (shares[k] * pos - assigned[k], shares[k]))
        assigned[best] += 1
        seq.append(best)
    return seq


def assign_roles(topo, cfg, registry):
    """Mark malicious nodes and wire their behaviors; returns ground truth.

    A fixed random permutation per seed decides the order in which nodes turn
    malicious, and the balanced type sequence decides what each one becomes.
    Ground stations are never malicious. Wormhole nodes are paired in
    selection order; an unpaired leftover is demoted to a gray hole so the
    pairing is always perfect.
    """
    airborne = topo.airborne_ids()
    count = round(cfg.malicious_ratio * len(airborne))
    truth = {nid: False for nid in airborne}
    if count == 0:
        return truth

    order = list(airborne)
    registry.stream("roles").shuffle(order)
    chosen = order[:count]

    types = attack_type_sequence(cfg.attack_mix, count)
    wh_nodes = []
    for nid, key in zip(chosen, types):
        node = topo.node(nid)
        node.role = ROLE_BY_KEY[key]
        truth[nid] = True
        if key == GH:
            node.gh_drop_prob = cfg.gh_drop_prob
        elif key == FID:
            node.tx_power_dbm += cfg.fid_ssi_boost
        elif key == WH:
            wh_nodes.append(nid)

    # Perfect matching over wormhole nodes, in selection order.
    if len(wh_nodes) % 2 == 1:
        leftover = wh_nodes.pop()
        node = topo.node(leftover)
        node.role = Role.GRAY_HOLE
        node.gh_drop_prob = cfg.gh_drop_prob
    for i in range(0, len(wh_nodes), 2):
        a, b = wh_nodes[i], wh_nodes[i + 1]
        topo.node(a).wh_peer = b
        topo.node(b).wh_peer = a
    return truth


def forge_rrep_fields(rreq, forger_id):
    """Field values for a black hole's fabricated route reply.

    The claimed path terminates at the forger with the requested destination
    appended; the hop count is reset to 1 and the destination sequence driven
    far above anything legitimate so the reply looks fresh and short.
    """
    path = tuple(rreq.path) + (forger_id, rreq.target)
    return path, 1, rreq.dest_seq + FORGED_SEQ_BUMP


def gh_drops(node, rng):
    """Gray-hole per-packet decision: True means drop."""
    return rng.random() < node.gh_drop_prob


def fid_claimed_position(true_pos, error_m, rng):
    """Displace the claimed position by error_m in a uniformly random 3D direction."""
    if error_m <= 0:
        return true_pos
    while True:
        dx = rng.uniform(-1.0, 1.0)
        dy = rng.uniform(-1.0, 1.0)
        dz = rng.uniform(-1.0, 1.0)
        norm = math.sqrt(dx * dx + dy * dy + dz * dz)
        if 1e-9 < norm <= 1.0:
            break
    scale = error_m / norm
    return (true_pos[0] + dx * scale, true_pos[1] + dy * scale, true_pos[2] + dz * scale)


def fid_garble_path(path, n_nodes, rng):
    """Replace one accumulated path entry with a random wrong node id.

    This is the route-poisoning half of fake-information dissemination: the
    message still looks well-formed but the recorded route no longer matches
    any usable chain of links.
    """
    if len(path) < 2:
        return path
    idx = rng.randrange(len(path) - 1)  # never the entry being appended next
    original = path[idx]
    replacement = rng.randrange(n_nodes)
    while replacement == original:
        replacement = rng.randrange(n_nodes)
    garbled = list(path)
    garbled[idx] = replacement
    return tuple(garbled)


def fid_corrupts_data(rng, rate):
    return rng.random() < rate
