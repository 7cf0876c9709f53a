"""The simulation world: one isolated network run driven by the event loop.

A World owns its topology, scheduler, traffic flows and defense state.
Two defense modes exist: the full vetting pipeline (probe, audit, anomaly
filter, detector classification, immune route selection) and a baseline that
adopts the first route reply it hears, paying no attention to security.

Everything random is drawn from per-label streams, so enabling an attack or
changing the malicious ratio never perturbs the draws of unrelated machinery,
and runs with equal seeds are bit-identical.
"""

import math
from collections import deque
from dataclasses import dataclass, field

from . import attacks as atk
from . import defense as dfs
from . import mobility as mob
from . import routing as rt
from .immune import (SafetyMemory, TrainingCoverageError, classify,
                     matching_detectors, clonal_select, train_detectors)
from .metrics import ConfusionCounts, RunResult, classify_and_count, compute_rates
from .netmodel import (Box, Role, add_ground_stations, distance,
                       inferred_tx_power_dbm, ppp_deploy, rx_signal_strength)
from .scenario import DEFENSE_SUAS_HIS
from .simcore import (AUDIT_STEP, CONTROL_MSG, DATA_MSG, METRIC_SAMPLE,
                      MOBILITY_TICK, PROBE_TIMEOUT, RngRegistry, Scheduler)


@dataclass
class RouteInstance:
    """One adoption of a route by a flow, with its own packet ledger."""

    route: object
    selected_at: float
    spc: rt.PacketCounters = field(default_factory=rt.PacketCounters)
    n_sent: int = 0
    delivered: int = 0          # arrivals at the destination, corrupt or not
    audit_scheduled: bool = False
    audit_done: bool = False
    draining: bool = False


@dataclass
class Flow:
    id: int
    src: int
    dst: int
    epoch: int = 0
    flood_id: int = 0
    expected_seq: int = 0
    next_pkt_seq: int = 0
    sent: int = 0
    delivered: int = 0          # clean arrivals only
    buffer: deque = field(default_factory=deque)
    buffer_dropped: int = 0
    route_inst: object = None
    discovering: bool = False
    request_time: float = 0.0
    last_discovery: float = -1e9
    retry_pending: bool = False
    seen_nodes: set = field(default_factory=set)
    pending_routes: dict = field(default_factory=dict)
    selection: object = None


@dataclass
class SelectionRun:
    flood_id: int
    routes: list
    features: dict
    confirmed: dict
    ledgers: dict
    pending: int = 0
    probes: dict = field(default_factory=dict)


@dataclass
class ProbeState:
    token: int = 0
    resolved: bool = True
    deadline: float = 0.0


@dataclass
class Agent:
    """Per-source defense agent: detectors, self set and safety memory."""

    src: int
    self_features: list = field(default_factory=list)
    detectors: object = None
    memory: SafetyMemory = None
    antigens: deque = None


class World:
    def __init__(self, cfg, seed, trace=False, bypass_attacks=False, record_decisions=False):
        self.cfg = cfg
        self.seed = seed
        self.registry = RngRegistry(seed)
        self.sched = Scheduler(trace=trace)
        self.defense_on = cfg.defense == DEFENSE_SUAS_HIS
        self.bypass_attacks = bypass_attacks
        self.record_decisions = record_decisions

        # UAVs cruise in a fixed altitude band inside the airspace; ground
        # stations sit on the floor at z = 0.
        deploy_box = Box(0.0, cfg.region_x, 0.0, cfg.region_y, cfg.altitude_min, cfg.altitude_max)
        self.topo = ppp_deploy(cfg.n_uavs, deploy_box, self.registry.stream("deploy"),
                               comm_range=cfg.comm_range, tx_power_dbm=cfg.tx_power_dbm)
        self.topo.region = Box.of_size(cfg.region_x, cfg.region_y, cfg.region_z)
        add_ground_stations(self.topo, cfg.n_ground_stations, tx_power_dbm=cfg.tx_power_dbm)
        self.nodes = self.topo.nodes
        self.n_nodes = len(self.nodes)
        self._range2 = cfg.comm_range * cfg.comm_range

        acfg = atk.AttackConfig(
            malicious_ratio=cfg.malicious_ratio,
            attack_mix=cfg.resolved_attack_mix(),
            gh_drop_prob=cfg.gh_drop_prob,
            wh_tunnel_latency=cfg.wh_tunnel_latency,
            wh_drop_prob=cfg.wh_drop_prob,
            fid_ssi_boost=cfg.fid_ssi_boost,
            fid_pos_error=cfg.fid_pos_error,
            fid_control_mod_rate=cfg.fid_control_mod_rate,
            fid_data_mod_rate=cfg.fid_data_mod_rate,
        )
        acfg.validate()
        self.attack_cfg = acfg
        if bypass_attacks:
            self.truth = {nid: False for nid in self.topo.airborne_ids()}
        else:
            self.truth = atk.assign_roles(self.topo, acfg, self.registry)

        # mobility state per airborne node
        self.st_params = mob.StParams(
            curvature_stddev=cfg.curvature_stddev,
            mean_maneuver_duration=cfg.mean_maneuver_duration,
            speed=cfg.uav_speed,
            r_min=cfg.min_turn_radius,
        )
        self.st_params.validate()
        self.st_state = {}
        for node in self.nodes:
            if not node.is_airborne():
                continue
            rng = self.registry.stream(f"mobility/{node.id}")
            heading = rng.uniform(0.0, 2.0 * math.pi)
            kappa, end = mob.sample_maneuver(rng, self.st_params, 0.0)
            self.st_state[node.id] = mob.StState(heading=heading, curvature=kappa, maneuver_end=end)
            node.velocity = (cfg.uav_speed * math.cos(heading), cfg.uav_speed * math.sin(heading), 0.0)

        # flows between ground stations: ring pairs first, then diagonals
        gs_ids = [n.id for n in self.nodes if n.role == Role.GROUND_STATION]
        n_gs = len(gs_ids)
        pairs = [(gs_ids[i], gs_ids[(i + d) % n_gs])
                 for d in range(1, n_gs) for i in range(n_gs)]
        self.flows = [Flow(id=i, src=s, dst=t)
                      for i, (s, t) in enumerate(pairs[: cfg.n_flows] or [(gs_ids[0], gs_ids[-1])])]
        self.gs_ids = set(gs_ids)

        # shared defense state (the instantaneous broadcast channel)
        self.suspects = set()
        self.suspect_channels = {}   # node id -> channel that first flagged it
        self.path_blacklist = set()
        self.pair_psb = {}
        self.audit_log = []       # (flow id, time, AuditReport)
        self.advisories = []
        self.decision_rows = []
        self.samples = []
        self.drop_counts = {}
        self.agents = {}
        if self.defense_on:
            for flow in self.flows:
                if flow.src not in self.agents:
                    self.agents[flow.src] = Agent(
                        src=flow.src,
                        memory=SafetyMemory(ttl=cfg.memory_ttl),
                        antigens=deque(maxlen=cfg.buffer_cap),
                    )
        # per-node rolling observation window: rx -> {tx: (inferred dBm, time)}
        self.obs_window = {n.id: {} for n in self.nodes}
        # broadcast reach cache, valid for one mobility tick
        self._reach_cache = {}

        # initial events
        self.sched.schedule(cfg.mobility_tick, MOBILITY_TICK, self._mobility_tick)
        for flow in self.flows:
            self.sched.schedule(0.0, CONTROL_MSG, self._make_epoch_fn(flow), note=f"epoch f{flow.id}")
            self.sched.schedule(1.0 / cfg.cbr_rate, DATA_MSG, self._make_cbr_fn(flow), note=f"cbr f{flow.id}")
        if self.defense_on and cfg.warmup_window > 0:
            self.sched.schedule(cfg.warmup_window, CONTROL_MSG, self._train_detectors, note="train")
        self.sched.schedule(min(30.0, cfg.sim_time), METRIC_SAMPLE, self._metric_sample)

    # ------------------------------------------------------------------ utils

    def _make_epoch_fn(self, flow):
        return lambda: self._begin_epoch(flow)

    def _make_cbr_fn(self, flow):
        return lambda: self._cbr_tick(flow)

    def node(self, nid):
        return self.nodes[nid]

    def in_range(self, a, b):
        pa = self.nodes[a].position
        pb = self.nodes[b].position
        dx = pa[0] - pb[0]
        dy = pa[1] - pb[1]
        dz = pa[2] - pb[2]
        return dx * dx + dy * dy + dz * dz <= self._range2

    def hop_latency(self, tx_id):
        base = self.cfg.hop_latency
        if self.cfg.latency_jitter > 0:
            base += self.registry.stream(f"latency/{tx_id}").random() * self.cfg.latency_jitter
        return base

    def _count_drop(self, reason):
        self.drop_counts[reason] = self.drop_counts.get(reason, 0) + 1

    def _suspect(self, nid, channel):
        if nid not in self.suspects:
            self.suspects.add(nid)
            self.suspect_channels[nid] = channel

    def route_intact(self, path):
        return all(self.in_range(path[i], path[i + 1]) for i in range(len(path) - 1))

    def _claimed_position(self, node):
        if node.role == Role.FID and not self.bypass_attacks:
            return atk.fid_claimed_position(
                node.position, self.attack_cfg.fid_pos_error,
                self.registry.stream(f"fid/{node.id}"))
        return node.position

    def _observe(self, rx_node, tx_node, claimed_pos):
        """Record the receiver's inferred-transmit-power reading of tx."""
        raw = rx_signal_strength(tx_node, rx_node.position, self.cfg.path_loss_exponent)
        inferred = inferred_tx_power_dbm(raw, distance(claimed_pos, rx_node.position),
                                         self.cfg.path_loss_exponent)
        if rx_node.role == Role.NORMAL or rx_node.role == Role.GROUND_STATION:
            self.obs_window[rx_node.id][tx_node.id] = (inferred, self.sched.now)
        return raw, inferred

    # -------------------------------------------------------------- mobility

    def _mobility_tick(self):
        now = self.sched.now
        cfg = self.cfg
        params = self.st_params
        region = self.topo.region
        dt = cfg.mobility_tick
        self._reach_cache.clear()
        for node in self.nodes:
            state = self.st_state.get(node.id)
            if state is None:
                continue
            if now >= state.maneuver_end:
                rng = self.registry.stream(f"mobility/{node.id}")
                state.curvature, state.maneuver_end = mob.sample_maneuver(rng, params, now)
            node.position, state.heading = mob.step(
                node.position, state.heading, state.curvature, params.speed, dt, region)
            node.velocity = (params.speed * math.cos(state.heading),
                             params.speed * math.sin(state.heading), 0.0)
        nxt = now + dt
        if nxt <= cfg.sim_time:
            self.sched.schedule(nxt, MOBILITY_TICK, self._mobility_tick)

    def _metric_sample(self):
        self.samples.append((self.sched.now,
                             sum(f.sent for f in self.flows),
                             sum(f.delivered for f in self.flows)))
        nxt = self.sched.now + 30.0
        if nxt <= self.cfg.sim_time:
            self.sched.schedule(nxt, METRIC_SAMPLE, self._metric_sample)

    # -------------------------------------------------------------- discovery

    def _begin_epoch(self, flow):
        flow.epoch += 1
        nxt = self.sched.now + self.cfg.epoch_period
        if nxt < self.cfg.sim_time:
            self.sched.schedule(nxt, CONTROL_MSG, self._make_epoch_fn(flow), note=f"epoch f{flow.id}")
        self._request_discovery(flow)

    def _request_discovery(self, flow):
        if flow.discovering:
            return
        earliest = flow.last_discovery + self.cfg.rediscovery_backoff
        now = self.sched.now
        if now >= earliest:
            self._start_discovery(flow)
        elif not flow.retry_pending:
            flow.retry_pending = True

            def retry():
                flow.retry_pending = False
                self._request_discovery(flow)

            self.sched.schedule(earliest, CONTROL_MSG, retry, note=f"retry f{flow.id}")

    def _memory_route_ok(self, route):
        if not self.route_intact(route.path):
            return False
        if route.path in self.path_blacklist:
            return False
        return not any(n in self.suspects for n in route.path)

    def _start_discovery(self, flow):
        now = self.sched.now
        flow.last_discovery = now
        if self.defense_on:
            agent = self.agents[flow.src]
            remembered = agent.memory.lookup(flow.src, flow.dst, now, hops_ok=self._memory_route_ok)
            if remembered is not None:
                self._adopt_route(flow, remembered)
                return
        flow.discovering = True
        flow.flood_id += 1
        flow.request_time = now
        flow.expected_seq = flow.epoch
        flow.pending_routes = {}
        flow.seen_nodes = {flow.src}
        flow.selection = None
        src_node = self.nodes[flow.src]
        msg = rt.ControlMsg(
            kind=rt.RREQ, origin=flow.src, target=flow.dst, hop_count=0,
            dest_seq=flow.expected_seq, path=(flow.src,),
            claimed_position=src_node.position, timestamp=now, flood_id=flow.flood_id,
        )
        self._broadcast_rreq(flow, src_node, msg)
        if self.defense_on:
            flood = flow.flood_id
            self.sched.schedule(now + self.cfg.collection_window, CONTROL_MSG,
                                lambda: self._begin_selection(flow, flood),
                                note=f"select f{flow.id}")

    def _reachable(self, tx_id):
        """Nodes inside comm range of tx, cached for the current tick."""
        cached = self._reach_cache.get(tx_id)
        if cached is not None:
            return cached
        px, py, pz = self.nodes[tx_id].position
        r2 = self._range2
        out = []
        for rx in self.nodes:
            if rx.id == tx_id:
                continue
            qx, qy, qz = rx.position
            dx = qx - px
            dy = qy - py
            dz = qz - pz
            if dx * dx + dy * dy + dz * dz <= r2:
                out.append(rx)
        self._reach_cache[tx_id] = out
        return out

    def _broadcast_rreq(self, flow, tx_node, msg):
        latency = self.hop_latency(tx_node.id)
        claimed = msg.claimed_position
        when = self.sched.now + latency
        tx_id = tx_node.id
        schedule = self.sched.schedule
        for rx in self._reachable(tx_id):
            schedule(
                when, CONTROL_MSG,
                (lambda rxn=rx: self._on_rreq(flow, rxn, msg, tx_id, claimed)),
                note=f"rreq f{flow.id} n{rx.id}")

    def _on_rreq(self, flow, rx_node, msg, tx_id, tx_claimed_pos):
        if msg.flood_id != flow.flood_id:
            return
        if self.defense_on:
            self._observe(rx_node, self.nodes[tx_id], tx_claimed_pos)
        nid = rx_node.id
        if nid == msg.target:
            # The destination answers every arriving copy: the full candidate
            # set is the defense's raw material.
            path = msg.path + (nid,)
            reply = rt.ControlMsg(
                kind=rt.RREP, origin=nid, target=msg.origin,
                hop_count=msg.hop_count + 1, dest_seq=msg.dest_seq,
                path=path, timestamp=self.sched.now, flood_id=msg.flood_id,
            )
            self._relay_reply(flow, reply, len(path) - 1)
            return
        role = rx_node.role
        # Detected attackers are isolated: cooperating nodes refuse to extend
        # floods that already pass through a shared suspect. Refusal does not
        # consume the first-copy slot, so a clean copy arriving later still
        # propagates: this is what breaks a tunnel's rushing advantage.
        if (
            self.defense_on
            and role in (Role.NORMAL, Role.GROUND_STATION)
            and self.suspects
            and any(n in self.suspects for n in msg.path)
        ):
            return
        if nid in flow.seen_nodes:
            return
        flow.seen_nodes.add(nid)
        if not self.bypass_attacks and role == Role.BLACK_HOLE:
            fpath, fhops, fseq = atk.forge_rrep_fields(msg, nid)
            reply = rt.ControlMsg(
                kind=rt.RREP, origin=msg.target, target=msg.origin,
                hop_count=fhops, dest_seq=fseq, path=fpath,
                timestamp=self.sched.now, flood_id=msg.flood_id,
            )
            # forged reply starts at the forger, which sits before the claimed
            # destination on the fabricated path
            self._relay_reply(flow, reply, len(fpath) - 2)
            return
        if not self.bypass_attacks and role == Role.WORMHOLE and rx_node.wh_peer is not None:
            peer = self.nodes[rx_node.wh_peer]
            flow.seen_nodes.add(peer.id)
            fwd = rt.ControlMsg(
                kind=rt.RREQ, origin=msg.origin, target=msg.target,
                hop_count=msg.hop_count + 1, dest_seq=msg.dest_seq,
                path=msg.path + (nid, peer.id),
                claimed_position=peer.position, timestamp=msg.timestamp,
                flood_id=msg.flood_id,
            )
            self.sched.schedule(
                self.sched.now + self.attack_cfg.wh_tunnel_latency, CONTROL_MSG,
                lambda: self._broadcast_rreq(flow, peer, fwd),
                note=f"wh-tunnel n{nid}")
            return
        path = msg.path
        if not self.bypass_attacks and role == Role.FID:
            rng = self.registry.stream(f"fid/{nid}")
            if rng.random() < self.attack_cfg.fid_control_mod_rate:
                path = atk.fid_garble_path(path, self.n_nodes, rng)
        fwd = rt.ControlMsg(
            kind=rt.RREQ, origin=msg.origin, target=msg.target,
            hop_count=msg.hop_count + 1, dest_seq=msg.dest_seq,
            path=path + (nid,),
            claimed_position=self._claimed_position(rx_node),
            timestamp=msg.timestamp, flood_id=msg.flood_id,
        )
        self._broadcast_rreq(flow, rx_node, fwd)

    def _relay_reply(self, flow, msg, holder_idx):
        """Move a route reply one step toward the source along its path."""
        if holder_idx <= 0:
            self._reply_at_source(flow, msg)
            return
        path = msg.path
        tx_id = path[holder_idx]
        rx_id = path[holder_idx - 1]
        if tx_id >= self.n_nodes or rx_id >= self.n_nodes:
            return  # garbled entry points nowhere
        tx_node = self.nodes[tx_id]
        role = tx_node.role
        if not self.bypass_attacks:
            if role == Role.BLACK_HOLE and msg.origin != tx_id and path[-2] != tx_id:
                return  # black holes relay nothing of others'
            if role == Role.WORMHOLE and tx_node.wh_peer == rx_id:
                self.sched.schedule(
                    self.sched.now + self.attack_cfg.wh_tunnel_latency, CONTROL_MSG,
                    lambda: self._relay_reply(flow, msg, holder_idx - 1),
                    note="wh-reply")
                return
            if role == Role.FID:
                rng = self.registry.stream(f"fid/{tx_id}")
                if rng.random() < self.attack_cfg.fid_control_mod_rate and holder_idx + 1 < len(path) - 1:
                    garbled = atk.fid_garble_path(
                        path[holder_idx + 1:], self.n_nodes, rng)
                    msg.path = path[: holder_idx + 1] + garbled
                    path = msg.path
        if not self.in_range(tx_id, rx_id):
            return  # reply dies on a broken hop
        rx_node = self.nodes[rx_id]
        claimed = self._claimed_position(tx_node)
        latency = self.hop_latency(tx_id)

        def arrive():
            raw, inferred = self._observe(rx_node, tx_node, claimed)
            msg.observations = msg.observations + ((tx_id, inferred),)
            if raw < msg.min_ssi_dbm:
                msg.min_ssi_dbm = raw
            self._relay_reply(flow, msg, holder_idx - 1)

        self.sched.schedule(self.sched.now + latency, CONTROL_MSG, arrive,
                            note=f"rrep n{rx_id}")

    def _reply_at_source(self, flow, msg):
        if msg.flood_id != flow.flood_id:
            return
        now = self.sched.now
        route = rt.Route(
            path=msg.path,
            rtt=now - flow.request_time,
            min_ssi_dbm=msg.min_ssi_dbm if msg.min_ssi_dbm != float("inf") else -200.0,
            hop_count=msg.hop_count,
            reply_arrival=now,
            dest_seq=msg.dest_seq,
            observations=msg.observations,
        )
        if not self.defense_on:
            # baseline protocol: the first reply wins, no vetting
            if flow.discovering:
                flow.discovering = False
                self._adopt_route(flow, route)
            return
        if flow.discovering and route.path not in flow.pending_routes:
            flow.pending_routes[route.path] = route

    # -------------------------------------------------------------- selection

    def _evaluate_local_windows(self):
        """Each cooperating node checks its recent receptions for a signal
        standing anomalously above the rest and reports the transmitter."""
        now = self.sched.now
        horizon = self.cfg.epoch_period
        for node in self.nodes:
            window = self.obs_window[node.id]
            if len(window) < 2:
                continue
            fresh = [(tx, val) for tx, (val, t) in window.items() if now - t <= horizon]
            if len(fresh) < 2:
                continue
            for flagged in dfs.ssi_filter(fresh, self.cfg.ssi_delta_db):
                self._suspect(flagged, "ssi-anomaly")

    def _phantom_hop_blame(self, route):
        """Suspect the pair straddling a claimed hop that nobody transmitted.

        A reply that really traversed its path radio hop by radio hop leaves
        one observation per intermediate transmitter. A tunneled or fabricated
        segment leaves none, while the claimed hop count disagrees with the
        path length. Blame applies only when every observed transmitter is on
        the path, i.e. the reply was not tampered with in transit.
        """
        if route.hop_claim_consistent():
            return
        observed = {tx for tx, _ in route.observations}
        path_set = set(route.path)
        if not observed or not observed.issubset(path_set):
            return
        expected = route.path[1:]  # every non-source member relays the reply
        for idx, nid in enumerate(expected):
            if nid in observed:
                continue
            if nid not in self.gs_ids:
                self._suspect(nid, "phantom-hop")
            # the observed neighbor that handed the phantom segment onward
            successor = route.path[idx]  # one step closer to the source
            if successor in observed and successor not in self.gs_ids:
                self._suspect(successor, "phantom-hop")

    def _begin_selection(self, flow, flood_id):
        if flow.flood_id != flood_id or not flow.discovering:
            return
        candidates = []
        for path, route in flow.pending_routes.items():
            if path in self.path_blacklist:
                route.status = rt.REJECTED
                self._log_decision(flow, route, None, None, dfs.REASON_BLACKLIST)
                continue
            self._phantom_hop_blame(route)
            candidates.append(route)
        self._evaluate_local_windows()
        if not candidates:
            flow.discovering = False
            self._no_safe_route(flow)
            return
        features = {id(r): dfs.route_features(r, candidates, self.pair_psb) for r in candidates}
        agent = self.agents[flow.src]
        confirmed = {}
        ledgers = {}
        for route in candidates:
            ok = not any(n in self.suspects for n in route.path)
            if ok:
                flagged = dfs.ssi_filter(list(route.observations), self.cfg.ssi_delta_db)
                ok = not (flagged & set(route.path))
            if ok and agent.detectors is not None:
                ok = not classify(features[id(route)], agent.detectors)
            confirmed[id(route)] = ok
            ledger = dfs.ProbeLedger(p_m=dfs.PM_MIN if ok else dfs.PM_MAX)
            ledgers[id(route)] = ledger
        sel = SelectionRun(flood_id=flood_id, routes=candidates, features=features,
                           confirmed=confirmed, ledgers=ledgers, pending=len(candidates))
        sel.probes = {id(r): ProbeState() for r in candidates}
        flow.selection = sel
        for route in candidates:
            self._launch_probe(flow, sel, route)

    def _launch_probe(self, flow, sel, route):
        state = sel.probes[id(route)]
        state.token += 1
        state.resolved = False
        token = state.token
        timeout = self.cfg.probe_timeout_factor * max(route.rtt, 4 * self.cfg.hop_latency)
        state.deadline = self.sched.now + timeout
        # The timeout is scheduled first so an ack landing exactly on the
        # deadline resolves as silent, matching the strictly-before contract.
        self.sched.schedule(state.deadline, PROBE_TIMEOUT,
                            lambda: self._probe_outcome(flow, sel, route, token, False),
                            note=f"probe-to f{flow.id}")
        self._relay_hello(flow, sel, route, token, 0, forward=True)

    def _relay_hello(self, flow, sel, route, token, idx, forward):
        path = route.path
        n = len(path)
        if forward and idx == n - 1:
            self._relay_hello(flow, sel, route, token, idx, forward=False)
            return
        if not forward and idx == 0:
            self._probe_outcome(flow, sel, route, token, True)
            return
        tx_id = path[idx]
        rx_idx = idx + 1 if forward else idx - 1
        rx_id = path[rx_idx]
        if tx_id >= self.n_nodes or rx_id >= self.n_nodes:
            return
        tx_node = self.nodes[tx_id]
        role = tx_node.role
        if not self.bypass_attacks and idx not in (0, n - 1):
            if role == Role.BLACK_HOLE:
                return  # hello swallowed
            if role == Role.GRAY_HOLE:
                if atk.gh_drops(tx_node, self.registry.stream(f"gh/{tx_id}")):
                    return
        if not self.bypass_attacks and role == Role.WORMHOLE and tx_node.wh_peer == rx_id:
            self.sched.schedule(self.sched.now + self.attack_cfg.wh_tunnel_latency,
                                CONTROL_MSG,
                                lambda: self._relay_hello(flow, sel, route, token, rx_idx, forward),
                                note="wh-hello")
            return
        if not self.in_range(tx_id, rx_id):
            return
        self.sched.schedule(self.sched.now + self.hop_latency(tx_id), CONTROL_MSG,
                            lambda: self._relay_hello(flow, sel, route, token, rx_idx, forward),
                            note=f"hello n{rx_id}")

    def _probe_outcome(self, flow, sel, route, token, acked):
        if flow.selection is not sel:
            return
        state = sel.probes[id(route)]
        if state.token != token or state.resolved:
            return
        state.resolved = True
        ledger = sel.ledgers[id(route)]
        ledger.record(acked)
        if not ledger.done():
            self._launch_probe(flow, sel, route)
            return
        route.p_m = ledger.p_m
        sel.pending -= 1
        if sel.pending == 0:
            self._finish_selection(flow, sel)

    def _finish_selection(self, flow, sel):
        flow.discovering = False
        flow.selection = None
        agent = self.agents[flow.src]
        decision = dfs.select_immune_route(
            sel.routes, self.suspects,
            detectors=agent.detectors, features=sel.features,
            tie_eps=self.cfg.sr_tie_eps, advisory_threshold=self.cfg.advisory_threshold,
        )
        now = self.sched.now
        for route, reason in decision.rejected:
            route.status = rt.REJECTED
            if self.cfg.share_blacklist:
                self.path_blacklist.add(route.path)
            # Forged-reply blame: a probed-out route whose reply claimed an
            # implausibly fresh destination sequence is pinned on the node
            # that fabricated it (the claimed last hop before the target).
            # Blame requires the recorded hop measurements to be consistent
            # with the claimed path, else the reply itself was tampered with
            # in transit and the tail cannot be trusted.
            if (
                reason == dfs.REASON_CONTAMINATION
                and route.dest_seq > flow.expected_seq + self.cfg.forged_seq_margin
                and len(route.path) >= 3
                and all(tx in route.path for tx, _ in route.observations)
            ):
                forger = route.path[-2]
                if forger not in self.gs_ids:
                    self._suspect(forger, "forged-reply")
            self._log_decision(flow, route, sel, decision, reason)
        for route in decision.advisories:
            self.advisories.append((flow.id, now, route.path, decision.scores[id(route)]))
        if self.record_decisions:
            rejected_ids = {id(r) for r, _ in decision.rejected}
            for route in sel.routes:
                if id(route) not in rejected_ids and route is not decision.winner:
                    self._log_decision(flow, route, sel, decision, "survivor")

        # everything the source saw this epoch joins the antigen history
        for route in sel.routes:
            agent.antigens.append(sel.features[id(route)])

        # detector evolution on this epoch's non-self matches
        if agent.detectors is not None:
            matched = []
            for route in sel.routes:
                vec = sel.features[id(route)]
                for det in matching_detectors(vec, agent.detectors):
                    matched.append((det, vec))
            if matched:
                clonal_select(agent.detectors, matched,
                              self.registry.stream(f"clonal/{agent.src}"),
                              agent.self_features)

        # benign routes observed during the training horizon become self
        if now < self.cfg.warmup_window:
            for route in sel.routes:
                if route.status == rt.REJECTED:
                    continue
                ledger = sel.ledgers[id(route)]
                if ledger.p_m == dfs.PM_MIN and sel.confirmed[id(route)]:
                    agent.self_features.append(sel.features[id(route)])

        winner = decision.winner
        if winner is None:
            self._no_safe_route(flow)
            return
        winner.status = rt.SELECTED
        agent.memory.store(flow.src, flow.dst, winner, now)
        self._log_decision(flow, winner, sel, decision, "selected")
        self._adopt_route(flow, winner)

    def _no_safe_route(self, flow):
        # A selection that ends empty does not tear down a route that is
        # already serving; the flow just tries again later.
        if flow.route_inst is not None:
            return
        retry_at = self.sched.now + self.cfg.no_route_retry
        if retry_at < self.cfg.sim_time:
            self.sched.schedule(retry_at, CONTROL_MSG,
                                lambda: self._request_discovery(flow),
                                note=f"no-route f{flow.id}")

    def _log_decision(self, flow, route, sel, decision, status):
        if not self.record_decisions:
            return
        ledger = sel.ledgers.get(id(route)) if sel else None
        score = decision.scores.get(id(route)) if decision else None
        self.decision_rows.append({
            "time": self.sched.now,
            "flow": flow.id,
            "epoch": flow.epoch,
            "path": "-".join(str(n) for n in route.path),
            "p_m": route.p_m,
            "probe_pattern": "".join("A" if a else "S" for a in ledger.pattern) if ledger else "",
            "uav_sr": score,
            "status": status,
        })

    def _train_detectors(self):
        for agent in self.agents.values():
            if not agent.self_features:
                continue
            rng = self.registry.stream(f"detector-train/{agent.src}")
            try:
                agent.detectors = train_detectors(
                    agent.self_features, self.cfg.detector_count, self.cfg.detector_radius,
                    rng, metric=self.cfg.detector_metric, dim=3,
                    max_attempts=self.cfg.detector_train_cap)
            except TrainingCoverageError as err:
                agent.detectors = err.detector_set

    # -------------------------------------------------------------- data plane

    def _adopt_route(self, flow, route):
        self._retire_instance(flow, flow.route_inst)
        inst = RouteInstance(route=route, selected_at=self.sched.now)
        flow.route_inst = inst
        self.nodes[flow.src].routing_table[flow.dst] = route
        self._drain_step(flow, inst)

    def _drain_step(self, flow, inst):
        """Release buffered packets one transmission apart, not as one burst,
        so a dead hop is noticed after the first loss instead of after all."""
        if flow.route_inst is not inst:
            inst.draining = False
            return
        if not flow.buffer:
            inst.draining = False
            return
        inst.draining = True
        self._transmit(flow, flow.buffer.popleft())
        spacing = self.cfg.hop_latency * len(inst.route.path)  # one traversal
        self.sched.schedule(self.sched.now + spacing, DATA_MSG,
                            lambda: self._drain_step(flow, inst),
                            note=f"drain f{flow.id}")

    def _retire_instance(self, flow, inst):
        """Audit a replaced or broken route instance if it carried enough data.

        Without this, short-lived routes would leak packets through a dropper
        that never stays in place long enough for the in-service audit.
        """
        if inst is None or not self.defense_on:
            return
        if inst.audit_done or inst.n_sent < self.cfg.audit_min_packets:
            return
        hops = len(inst.route.path) - 1
        settle = 0.5 + 4.0 * hops * self.cfg.hop_latency  # let in-flight data land
        self.sched.schedule(self.sched.now + settle, AUDIT_STEP,
                            lambda: self._audit_eval(flow, inst, retired=True),
                            note=f"audit-retire f{flow.id}")

    def _route_usable(self, flow):
        inst = flow.route_inst
        if inst is None:
            return False
        if self.defense_on:
            path = inst.route.path
            if path in self.path_blacklist or any(n in self.suspects for n in path):
                flow.route_inst = None
                self._retire_instance(flow, inst)
                self._request_discovery(flow)
                return False
        return True

    def _cbr_tick(self, flow):
        now = self.sched.now
        nxt = now + 1.0 / self.cfg.cbr_rate
        if nxt <= self.cfg.sim_time:
            self.sched.schedule(nxt, DATA_MSG, self._make_cbr_fn(flow), note=f"cbr f{flow.id}")
        flow.sent += 1
        pkt = rt.DataPacket(src=flow.src, dst=flow.dst, seq=flow.next_pkt_seq,
                            size=self.cfg.packet_size, flow_id=flow.id, sent_at=now)
        flow.next_pkt_seq += 1
        usable = self._route_usable(flow)
        if usable and not flow.buffer:
            self._transmit(flow, pkt)
            return
        if len(flow.buffer) >= self.cfg.buffer_cap:
            flow.buffer.popleft()
            flow.buffer_dropped += 1
            self._count_drop(rt.DROP_BUFFER_OVERFLOW)
        flow.buffer.append(pkt)
        # keep order: new packets queue behind an in-progress drain
        if usable and not flow.route_inst.draining:
            self._drain_step(flow, flow.route_inst)

    def _transmit(self, flow, pkt):
        inst = flow.route_inst
        pkt.route = inst.route.path
        pkt.hop_index = 0
        inst.n_sent += 1
        if (
            self.defense_on
            and not inst.audit_scheduled
            and inst.n_sent >= self.cfg.audit_min_packets
        ):
            inst.audit_scheduled = True
            self.sched.schedule(self.sched.now + self.cfg.audit_delay, AUDIT_STEP,
                                lambda: self._audit_start(flow, inst),
                                note=f"audit f{flow.id}")
        self._data_hop(flow, inst, pkt, 0)

    def _data_hop(self, flow, inst, pkt, i):
        path = pkt.route
        tx_id = path[i]
        rx_id = path[i + 1]
        if tx_id >= self.n_nodes or rx_id >= self.n_nodes:
            self._count_drop(rt.DROP_LINK_BROKEN)
            return
        tx_node = self.nodes[tx_id]
        role = tx_node.role
        if not self.bypass_attacks and i > 0:
            if role == Role.BLACK_HOLE:
                self._count_drop(rt.DROP_MALICIOUS)
                return
            if role == Role.GRAY_HOLE:
                if atk.gh_drops(tx_node, self.registry.stream(f"gh/{tx_id}")):
                    self._count_drop(rt.DROP_MALICIOUS)
                    return
            if role == Role.FID:
                if atk.fid_corrupts_data(self.registry.stream(f"fid/{tx_id}"),
                                         self.attack_cfg.fid_data_mod_rate):
                    pkt.corrupted = True
        if not self.bypass_attacks and role == Role.WORMHOLE and tx_node.wh_peer == rx_id:
            if self.registry.stream(f"wh/{tx_id}").random() < self.attack_cfg.wh_drop_prob:
                self._count_drop(rt.DROP_MALICIOUS)
                return
            inst.spc.increment(tx_id, rx_id)
            self.sched.schedule(self.sched.now + self.attack_cfg.wh_tunnel_latency, DATA_MSG,
                                lambda: self._data_arrive(flow, inst, pkt, i + 1),
                                note="wh-data")
            return
        if not self.in_range(tx_id, rx_id):
            self._count_drop(rt.DROP_LINK_BROKEN)
            # Honest transmitters sense the dead link and warn the source;
            # malicious drops are silent, which is exactly what makes the
            # packet-count audit necessary.
            if role in (Role.NORMAL, Role.GROUND_STATION, Role.GRAY_HOLE, Role.FID):
                self.sched.schedule(self.sched.now + self.cfg.hop_latency, CONTROL_MSG,
                                    lambda: self._on_link_fail(flow, inst),
                                    note=f"linkfail f{flow.id}")
            return
        inst.spc.increment(tx_id, rx_id)
        self.sched.schedule(self.sched.now + self.hop_latency(tx_id), DATA_MSG,
                            lambda: self._data_arrive(flow, inst, pkt, i + 1),
                            note=f"data n{rx_id}")

    def _data_arrive(self, flow, inst, pkt, j):
        if pkt.route[j] == pkt.dst:
            inst.delivered += 1
            if not pkt.corrupted:
                flow.delivered += 1
            return
        pkt.hop_index = j
        self._data_hop(flow, inst, pkt, j)

    def _on_link_fail(self, flow, inst):
        if flow.route_inst is inst:
            flow.route_inst = None
            if self.defense_on:
                self.agents[flow.src].memory.evict(flow.src, flow.dst)
            self._retire_instance(flow, inst)
            self._request_discovery(flow)

    # ------------------------------------------------------------------ audit

    def _audit_start(self, flow, inst):
        if flow.route_inst is not inst:
            return
        hops = len(inst.route.path) - 1
        walk = 4.0 * hops * self.cfg.hop_latency
        self.sched.schedule(self.sched.now + walk, AUDIT_STEP,
                            lambda: self._audit_eval(flow, inst),
                            note=f"audit-eval f{flow.id}")

    def _query_response(self, inst, path, i):
        """The sent-packet count path[i] reports for its next hop, or None."""
        nid = path[i]
        node = self.nodes[nid]
        if node.role in (Role.BLACK_HOLE, Role.WORMHOLE):
            return None  # covert nodes do not answer the walk
        for j in range(i + 1, len(path) - 1):
            if self.nodes[path[j]].role == Role.BLACK_HOLE:
                return None  # the query cannot traverse a black hole
        return inst.spc.get(nid, path[i + 1])

    def _audit_eval(self, flow, inst, retired=False):
        if inst.audit_done or inst.n_sent <= 0:
            return
        if not retired and flow.route_inst is not inst:
            return
        inst.audit_done = True
        path = inst.route.path
        if any(p >= self.n_nodes for p in path):
            return
        reports = {path[i]: self._query_response(inst, path, i) for i in range(len(path) - 1)}
        report = dfs.phase2_audit(path, reports, inst.n_sent, self.cfg.t_s,
                                  delivered=inst.delivered,
                                  immune_ids=self.gs_ids & {path[0], path[-1]})
        self.audit_log.append((flow.id, self.sched.now, report))
        for pair, p_sb in report.pair_scores:
            if p_sb > self.pair_psb.get(pair, 0.0):
                self.pair_psb[pair] = p_sb
        if report.suspects:
            if self.cfg.share_blacklist:
                for nid in sorted(report.suspects):
                    self._suspect(nid, "audit")
                self.path_blacklist.add(path)
            if flow.route_inst is inst:
                flow.route_inst = None
                self.agents[flow.src].memory.evict(flow.src, flow.dst)
                self._request_discovery(flow)

    # -------------------------------------------------------------- lifecycle

    def run(self):
        self.sched.run_until(self.cfg.sim_time)
        return self

    def rtt_probe(self, route, done):
        """Measure actual traversal time of a timestamped probe over a route.

        Calls done(rtt_seconds) on ack, or done(None) on loss after the
        timeout; the caller treats a loss as the maximum-rtt sentinel.
        """
        start = self.sched.now
        state = {"resolved": False}
        flow = Flow(id=-1, src=route.path[0], dst=route.path[-1])
        sel = SelectionRun(flood_id=-1, routes=[route], features={}, confirmed={},
                           ledgers={id(route): dfs.ProbeLedger()}, pending=1)
        sel.probes = {id(route): ProbeState()}

        # reuse the hello walker with a one-shot outcome hook
        original = self._probe_outcome

        def outcome(acked):
            if state["resolved"]:
                return
            state["resolved"] = True
            self._probe_outcome = original
            done(self.sched.now - start if acked else None)

        def hooked(fl, s, r, token, acked):
            if s is sel:
                outcome(acked)
            else:
                original(fl, s, r, token, acked)

        self._probe_outcome = hooked
        timeout = self.cfg.probe_timeout_factor * max(route.rtt, 4 * self.cfg.hop_latency)
        self.sched.schedule(start + timeout, PROBE_TIMEOUT, lambda: outcome(False))
        flow.selection = sel
        self._relay_hello(flow, sel, route, 1, 0, forward=True)

    def final_suspects(self):
        return {n for n in self.suspects if n in self.truth}

    def result(self, scenario_name="custom"):
        cfg = self.cfg
        flagged = self.final_suspects()
        confusion = classify_and_count(self.truth, flagged)
        fpr, fnr, dr = compute_rates(confusion)
        return RunResult(
            scenario=scenario_name,
            defense=cfg.defense,
            seed=self.seed,
            n_uavs=cfg.n_uavs,
            sim_time=cfg.sim_time,
            malicious_ratio=cfg.malicious_ratio,
            t_s=cfg.t_s,
            attack=cfg.attack,
            confusion=confusion,
            fpr=fpr, fnr=fnr, dr=dr,
            sent=sum(f.sent for f in self.flows),
            received=sum(f.delivered for f in self.flows),
        )
