"""Scenario configuration: validated parameters, presets and YAML files.

A scenario file is nested YAML; every key maps to one ScenarioConfig field.
Unknown keys are rejected and invariant violations name the offending field.
`write_reference_scenario` emits a fully commented file documenting every key
and its default.
"""

import copy
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import yaml

from .attacks import ATTACK_KEYS

DEFENSE_SUAS_HIS = "suas-his"
DEFENSE_NONE = "none"

ATTACK_LABELS = {
    "mixed": {k: 0.25 for k in ATTACK_KEYS},
    "wh": {"wh": 1.0},
    "bh": {"bh": 1.0},
    "gh": {"gh": 1.0},
    "fid": {"fid": 1.0},
}

SWEEPABLE = (
    "n_uavs", "sim_time", "malicious_ratio", "t_s", "defense", "attack",
    "uav_speed", "comm_range",
)


class ConfigError(ValueError):
    """A scenario file or config object violates the parameter contract."""


@dataclass
class ScenarioConfig:
    name: str = "custom"
    seeds: list = field(default_factory=lambda: list(range(10)))

    # network
    n_uavs: int = 100
    n_ground_stations: int = 4
    region_x: float = 2000.0
    region_y: float = 2000.0
    region_z: float = 500.0
    altitude_min: float = 50.0
    altitude_max: float = 150.0
    comm_range: float = 300.0
    tx_power_dbm: float = 20.0
    path_loss_exponent: float = 2.0

    # mobility
    uav_speed: float = 180.0
    mobility_tick: float = 0.1
    curvature_stddev: float = 1.0 / 2000.0
    mean_maneuver_duration: float = 10.0
    min_turn_radius: float = 300.0

    # traffic
    sim_time: float = 300.0
    cbr_rate: float = 4.0
    n_flows: int = 4
    packet_size: int = 512

    # link model
    hop_latency: float = 0.005
    latency_jitter: float = 0.001

    # attacks
    malicious_ratio: float = 0.0
    attack: str = "mixed"
    attack_mix: Optional[dict] = None
    gh_drop_prob: float = 0.5
    wh_tunnel_latency: float = 0.0001
    wh_drop_prob: float = 1.0
    fid_ssi_boost: float = 15.0
    fid_pos_error: float = 500.0
    fid_control_mod_rate: float = 1.0
    fid_data_mod_rate: float = 0.2

    # defense
    defense: str = DEFENSE_SUAS_HIS
    t_s: float = 0.1
    ssi_delta_db: float = 10.0
    collection_window: float = 10.0
    epoch_period: float = 30.0
    probe_timeout_factor: float = 2.0
    warmup_window: float = 70.0
    memory_ttl: float = 11.0
    buffer_cap: int = 1200
    detector_count: int = 200
    detector_radius: float = 0.1
    detector_metric: str = "euclidean"
    detector_train_cap: int = 1_000_000
    audit_min_packets: int = 50
    audit_delay: float = 1.0
    rediscovery_backoff: float = 1.0
    no_route_retry: float = 5.0
    forged_seq_margin: int = 50
    sr_tie_eps: float = 1e-6
    advisory_threshold: float = 0.5
    share_blacklist: bool = True

    # sweep: field name -> list of values; cells are the cartesian product
    sweep: dict = field(default_factory=dict)

    def resolved_attack_mix(self):
        if self.attack_mix is not None:
            return dict(self.attack_mix)
        if self.attack not in ATTACK_LABELS:
            raise ConfigError(f"attack: unknown label {self.attack!r}, expected one of {sorted(ATTACK_LABELS)}")
        return dict(ATTACK_LABELS[self.attack])

    def validate(self):
        def require(cond, field_name, msg):
            if not cond:
                raise ConfigError(f"{field_name}: {msg}")

        require(self.n_uavs >= 1, "n_uavs", f"must be >= 1, got {self.n_uavs}")
        require(self.n_ground_stations >= 2, "n_ground_stations", "need at least two ground stations for flows")
        require(self.region_x > 0 and self.region_y > 0 and self.region_z > 0,
                "region", "all region extents must be positive")
        require(0.0 <= self.altitude_min < self.altitude_max <= self.region_z,
                "altitude", "need 0 <= altitude_min < altitude_max <= region_z")
        require(self.comm_range > 0, "comm_range", "must be positive")
        require(self.uav_speed > 0, "uav_speed", "must be positive")
        require(self.mobility_tick > 0, "mobility_tick", "must be positive")
        require(self.curvature_stddev >= 0, "curvature_stddev", "must be >= 0")
        require(self.mean_maneuver_duration > 0, "mean_maneuver_duration", "must be positive")
        require(self.min_turn_radius > 0, "min_turn_radius", "must be positive")
        require(self.sim_time > 0, "sim_time", "must be positive")
        require(self.cbr_rate > 0, "cbr_rate", "must be positive")
        require(1 <= self.n_flows, "n_flows", "must be >= 1")
        require(self.packet_size > 0, "packet_size", "must be positive")
        require(self.hop_latency > 0, "hop_latency", "must be positive")
        require(self.latency_jitter >= 0, "latency_jitter", "must be >= 0")
        require(0.0 <= self.malicious_ratio <= 0.30, "malicious_ratio",
                f"must be within [0, 0.30], got {self.malicious_ratio}")
        require(0.0 < self.gh_drop_prob < 1.0, "gh_drop_prob", "must lie strictly in (0, 1)")
        require(0.0 <= self.t_s <= 0.2, "t_s", f"must be within [0, 0.2], got {self.t_s}")
        require(self.defense in (DEFENSE_SUAS_HIS, DEFENSE_NONE), "defense",
                f"must be {DEFENSE_SUAS_HIS!r} or {DEFENSE_NONE!r}")
        require(self.collection_window > 0, "collection_window", "must be positive")
        require(self.epoch_period > 0, "epoch_period", "must be positive")
        require(self.warmup_window >= 0, "warmup_window", "must be >= 0")
        require(self.memory_ttl > 0, "memory_ttl", "must be positive")
        require(self.buffer_cap >= 1, "buffer_cap", "must be >= 1")
        require(self.detector_count >= 1, "detector_count", "must be >= 1")
        require(self.detector_radius > 0, "detector_radius", "must be positive")
        require(self.detector_metric in ("euclidean", "manhattan"), "detector_metric",
                "must be euclidean or manhattan for real-valued features")
        require(self.audit_min_packets >= 1, "audit_min_packets", "must be >= 1")
        require(self.seeds and all(isinstance(s, int) for s in self.seeds), "seeds",
                "must be a nonempty list of integers")
        if self.attack_mix is not None:
            bad = set(self.attack_mix) - set(ATTACK_KEYS)
            require(not bad, "attack_mix", f"unknown attack keys {sorted(bad)}")
            require(sum(self.attack_mix.values()) > 0, "attack_mix", "weights must sum to > 0")
        else:
            require(self.attack in ATTACK_LABELS, "attack",
                    f"unknown label {self.attack!r}, expected one of {sorted(ATTACK_LABELS)}")
        for key, values in self.sweep.items():
            require(key in SWEEPABLE, "sweep", f"field {key!r} is not sweepable (allowed: {SWEEPABLE})")
            require(isinstance(values, list) and values, "sweep", f"{key} must map to a nonempty list")
        # Validate every sweep cell against the same invariants.
        if self.sweep:
            for cell in expand_cells(self):
                cell_no_sweep = replace(cell, sweep={})
                cell_no_sweep.validate()
        return self


def expand_cells(cfg):
    """Cartesian product of the sweep lists; returns per-cell configs."""
    cells = [cfg if not cfg.sweep else replace(cfg, sweep=dict(cfg.sweep))]
    if not cfg.sweep:
        return [replace(cfg)]
    items = sorted(cfg.sweep.items())
    cells = [replace(cfg)]
    for key, values in items:
        cells = [replace(c, **{key: v}) for c in cells for v in values]
    for c in cells:
        c.sweep = {}
    return cells


# (section, yaml key) -> dataclass field
FIELD_MAP = {
    ("scenario", "name"): "name",
    ("scenario", "seeds"): "seeds",
    ("network", "n_uavs"): "n_uavs",
    ("network", "n_ground_stations"): "n_ground_stations",
    ("network", "region_x"): "region_x",
    ("network", "region_y"): "region_y",
    ("network", "region_z"): "region_z",
    ("network", "altitude_min"): "altitude_min",
    ("network", "altitude_max"): "altitude_max",
    ("network", "comm_range"): "comm_range",
    ("network", "tx_power_dbm"): "tx_power_dbm",
    ("network", "path_loss_exponent"): "path_loss_exponent",
    ("mobility", "uav_speed"): "uav_speed",
    ("mobility", "tick"): "mobility_tick",
    ("mobility", "curvature_stddev"): "curvature_stddev",
    ("mobility", "mean_maneuver_duration"): "mean_maneuver_duration",
    ("mobility", "min_turn_radius"): "min_turn_radius",
    ("traffic", "sim_time"): "sim_time",
    ("traffic", "cbr_rate"): "cbr_rate",
    ("traffic", "n_flows"): "n_flows",
    ("traffic", "packet_size"): "packet_size",
    ("link", "hop_latency"): "hop_latency",
    ("link", "latency_jitter"): "latency_jitter",
    ("attacks", "malicious_ratio"): "malicious_ratio",
    ("attacks", "attack"): "attack",
    ("attacks", "attack_mix"): "attack_mix",
    ("attacks", "gh_drop_prob"): "gh_drop_prob",
    ("attacks", "wh_tunnel_latency"): "wh_tunnel_latency",
    ("attacks", "wh_drop_prob"): "wh_drop_prob",
    ("attacks", "fid_ssi_boost"): "fid_ssi_boost",
    ("attacks", "fid_pos_error"): "fid_pos_error",
    ("attacks", "fid_control_mod_rate"): "fid_control_mod_rate",
    ("attacks", "fid_data_mod_rate"): "fid_data_mod_rate",
    ("defense", "mode"): "defense",
    ("defense", "t_s"): "t_s",
    ("defense", "ssi_delta_db"): "ssi_delta_db",
    ("defense", "collection_window"): "collection_window",
    ("defense", "epoch_period"): "epoch_period",
    ("defense", "probe_timeout_factor"): "probe_timeout_factor",
    ("defense", "warmup_window"): "warmup_window",
    ("defense", "memory_ttl"): "memory_ttl",
    ("defense", "buffer_cap"): "buffer_cap",
    ("defense", "detector_count"): "detector_count",
    ("defense", "detector_radius"): "detector_radius",
    ("defense", "detector_metric"): "detector_metric",
    ("defense", "detector_train_cap"): "detector_train_cap",
    ("defense", "audit_min_packets"): "audit_min_packets",
    ("defense", "audit_delay"): "audit_delay",
    ("defense", "rediscovery_backoff"): "rediscovery_backoff",
    ("defense", "no_route_retry"): "no_route_retry",
    ("defense", "forged_seq_margin"): "forged_seq_margin",
    ("defense", "sr_tie_eps"): "sr_tie_eps",
    ("defense", "advisory_threshold"): "advisory_threshold",
    ("defense", "share_blacklist"): "share_blacklist",
}

FIELD_DOCS = {
    "name": "scenario identifier used in result rows",
    "seeds": "list of master seeds; one isolated run per (cell, seed)",
    "n_uavs": "airborne UAV count (ground stations are extra)",
    "n_ground_stations": "ground stations placed on the region floor",
    "region_x": "region extent in meters (x)",
    "region_y": "region extent in meters (y)",
    "region_z": "airspace ceiling in meters (z)",
    "altitude_min": "bottom of the UAV cruise band; altitudes are fixed per UAV at deploy",
    "altitude_max": "top of the UAV cruise band",
    "comm_range": "maximum one-hop radio range in meters",
    "tx_power_dbm": "standard transmit power",
    "path_loss_exponent": "log-distance path loss exponent",
    "uav_speed": "constant UAV speed in m/s",
    "mobility_tick": "mobility integration step in seconds",
    "curvature_stddev": "std dev of the turn curvature draw (1/m); 0 = always straight",
    "mean_maneuver_duration": "mean of the exponential maneuver duration (s)",
    "min_turn_radius": "curvature draws are truncated to 1/this radius (m)",
    "sim_time": "simulated duration in seconds",
    "cbr_rate": "constant bit rate per flow in packets/s",
    "n_flows": "concurrent ground-station-to-ground-station flows",
    "packet_size": "data packet size in bytes",
    "hop_latency": "fixed one-way per-hop latency (s)",
    "latency_jitter": "uniform extra per-transmission latency in [0, jitter] (s)",
    "malicious_ratio": "fraction of airborne UAVs made malicious, 0 to 0.30",
    "attack": "attack mix label: mixed | wh | bh | gh | fid",
    "attack_mix": "explicit weights over wh/bh/gh/fid; overrides the label when set",
    "gh_drop_prob": "gray hole per-packet drop probability, strictly in (0, 1)",
    "wh_tunnel_latency": "out-of-band tunnel latency between wormhole peers (s)",
    "wh_drop_prob": "probability the tunnel swallows a captured data packet",
    "fid_ssi_boost": "fake-information transmitter power boost in dB",
    "fid_pos_error": "magnitude of the claimed-position lie in meters",
    "fid_control_mod_rate": "probability a forwarded control message is corrupted",
    "fid_data_mod_rate": "probability a forwarded data packet is corrupted",
    "defense": "suas-his (full vetting pipeline) or none (first-reply baseline)",
    "t_s": "surveillance threshold for the packet-count audit, 0 to 0.2",
    "ssi_delta_db": "signal anomaly filter threshold in dB",
    "collection_window": "route reply collection window per discovery (s)",
    "epoch_period": "per-flow rediscovery period (s)",
    "probe_timeout_factor": "hello probe timeout as a multiple of the measured rtt",
    "warmup_window": "training horizon: benign routes observed before this time form the self set (s)",
    "memory_ttl": "safety memory entry lifetime (s)",
    "buffer_cap": "cap shared by the delay buffer and the antigen history",
    "detector_count": "negative-selection detector budget (ni)",
    "detector_radius": "detector match radius in normalized feature space",
    "detector_metric": "affinity metric for real-valued features",
    "detector_train_cap": "candidate draw cap before training is declared stalled",
    "audit_min_packets": "data packets on a route before its audit fires",
    "audit_delay": "settle time between the audit trigger and the walk (s)",
    "rediscovery_backoff": "minimum spacing between route discoveries per flow (s)",
    "no_route_retry": "retry delay after a selection ends with no safe route (s)",
    "forged_seq_margin": "destination-sequence excess treated as a forgery signature",
    "sr_tie_eps": "score ties within this epsilon fall back to the fastest reply",
    "advisory_threshold": "surviving routes scoring below this are broadcast as advisories",
    "share_blacklist": "share suspects and rejected routes network-wide instantly",
}

_SECTION_ORDER = ("scenario", "network", "mobility", "traffic", "link", "attacks", "defense")


def _from_nested(data, source="<config>"):
    cfg = ScenarioConfig()
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    for section, content in data.items():
        if section == "sweep":
            if not isinstance(content, dict):
                raise ConfigError("sweep: must be a mapping of field -> list")
            cfg.sweep = dict(content)
            continue
        if section not in _SECTION_ORDER:
            raise ConfigError(f"unknown section {section!r}")
        if content is None:
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in content.items():
            attr = FIELD_MAP.get((section, key))
            if attr is None:
                raise ConfigError(f"unknown key {section}.{key}")
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg


def load_scenario(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}")
    return _from_nested(data or {}, source=str(path))


def to_nested(cfg):
    out = {section: {} for section in _SECTION_ORDER}
    for (section, key), attr in FIELD_MAP.items():
        out[section][key] = getattr(cfg, attr)
    if cfg.sweep:
        out["sweep"] = copy.deepcopy(cfg.sweep)
    return out


def save_scenario(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(to_nested(cfg), fh, sort_keys=False)


def write_reference_scenario(path):
    """Emit a reference file documenting every key and its default value."""
    cfg = ScenarioConfig()
    lines = ["# Reference scenario: every key with its default and meaning.", ""]
    for section in _SECTION_ORDER:
        lines.append(f"{section}:")
        for (sec, key), attr in FIELD_MAP.items():
            if sec != section:
                continue
            value = getattr(cfg, attr)
            doc = FIELD_DOCS.get(attr, "")
            rendered = yaml.safe_dump({key: value}, default_flow_style=True).strip()
            if rendered.endswith("}"):  # inline lists/dicts come back braced
                rendered = f"{key}: {yaml.safe_dump(value, default_flow_style=True).strip()}"
            lines.append(f"  {rendered}  # {doc}")
        lines.append("")
    lines.append("# Optional sweep section: field -> list of values, e.g.")
    lines.append("# sweep:")
    lines.append("#   malicious_ratio: [0.0, 0.1, 0.2, 0.3]")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def preset(name):
    """Built-in scenarios: desk (fast acceptance scale) and the two table setups."""
    if name == "desk":
        # Desk-scale tuning: slower cruise speed and a short reply-collection
        # window keep candidate routes fresh relative to link lifetimes in the
        # small region, so a full sweep finishes in minutes.
        return ScenarioConfig(
            name="desk",
            seeds=list(range(10)),
            n_uavs=100,
            region_x=2000.0, region_y=2000.0, region_z=500.0,
            comm_range=300.0,
            uav_speed=5.0,
            collection_window=2.0,
            audit_min_packets=16,
            n_flows=8,
            sim_time=300.0,
            t_s=0.1,
            malicious_ratio=0.0,
            defense=DEFENSE_SUAS_HIS,
            sweep={"malicious_ratio": [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30]},
        ).validate()
    if name == "scenario1":
        return ScenarioConfig(
            name="scenario1",
            seeds=list(range(4)),
            n_uavs=100,
            region_x=6000.0, region_y=6000.0, region_z=500.0,
            comm_range=300.0,
            uav_speed=180.0,
            sim_time=1400.0,
            malicious_ratio=0.07,
            sweep={"n_uavs": [100, 200, 300, 400],
                   "malicious_ratio": [0.07, 0.14, 0.21]},
        ).validate()
    if name == "scenario2":
        return ScenarioConfig(
            name="scenario2",
            seeds=list(range(4)),
            n_uavs=400,
            region_x=4000.0, region_y=4000.0, region_z=500.0,
            comm_range=300.0,
            uav_speed=180.0,
            sim_time=200.0,
            malicious_ratio=0.07,
            sweep={"sim_time": [200.0, 400.0, 600.0, 800.0, 1000.0, 1200.0, 1400.0]},
        ).validate()
    raise ConfigError(f"unknown preset {name!r} (expected desk, scenario1 or scenario2)")


PRESET_NAMES = ("desk", "scenario1", "scenario2")
