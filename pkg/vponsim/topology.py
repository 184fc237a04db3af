"""Optical distribution network: splitter graph, wavelength rule sets, path resolution."""

from dataclasses import dataclass, field
from enum import Enum

import networkx as nx

from vponsim.config import TopologyConfig
from vponsim.decorators import guard
from vponsim.exceptions import NoPathError, TopologyError
from vponsim.log_config import get_logger
from vponsim.utils import NS_PER_US, natural_key

logger = get_logger(__name__)


class NodeRole(str, Enum):
    CO = "co"
    LEVEL2 = "level2-splitter"
    LEVEL1 = "level1-splitter"
    EDGE_OLT_SITE = "edge-olt-site"
    ONU_SITE = "onu-site"


class PortClass(str, Enum):
    LOWER = "lower"
    TRUNK = "trunk"
    XLINK = "xlink"
    LOOPBACK = "loopback"


class EastWestMode(str, Enum):
    DIRECT = "direct"
    OVERLAY = "overlay"


@dataclass(frozen=True)
class FiberLink:
    a: str
    a_port: PortClass | None
    b: str
    b_port: PortClass | None
    length_km: float
    overlay: bool = False

    def reversed(self) -> "FiberLink":
        return FiberLink(self.b, self.b_port, self.a, self.a_port, self.length_km, self.overlay)


@dataclass
class SplitterRuleSet:
    """
    Channel indices handled by the blocks above a level-1 splitter body:
    the loopback block (reflect), the adjacent-splitter filter (xpass) and
    the trunk filter (trunkpass).
    """

    reflect_set: set[int] = field(default_factory=set)
    xpass_set: set[int] = field(default_factory=set)
    trunkpass_set: set[int] = field(default_factory=set)

    def validate(self, splitter: str) -> None:
        if overlap := self.reflect_set & self.trunkpass_set:
            raise TopologyError(f"{splitter}: channels {sorted(overlap)} both reflected and passed to the trunk")

    def egress(self, ingress: PortClass, channel: int) -> frozenset[PortClass]:
        if ingress is PortClass.LOWER:
            if channel in self.reflect_set:
                return frozenset({PortClass.LOWER})
            if channel in self.trunkpass_set:
                return frozenset({PortClass.TRUNK})
            if channel in self.xpass_set:
                return frozenset({PortClass.XLINK})
        elif ingress is PortClass.XLINK:
            if channel in self.xpass_set:
                return frozenset({PortClass.LOWER})
        elif ingress is PortClass.TRUNK:
            if channel in self.trunkpass_set:
                return frozenset({PortClass.LOWER})
        return frozenset()


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    links: tuple[FiberLink, ...]

    @property
    def total_length_km(self) -> float:
        return sum(link.length_km for link in self.links)

    @property
    def src(self) -> str:
        return self.nodes[0]

    @property
    def dst(self) -> str:
        return self.nodes[-1]

    def reversed(self) -> "Path":
        return Path(tuple(reversed(self.nodes)), tuple(link.reversed() for link in reversed(self.links)))


class OdnTopology:
    def __init__(
        self,
        graph: nx.Graph,
        rules: dict[str, SplitterRuleSet],
        east_west_mode: EastWestMode = EastWestMode.DIRECT,
        propagation_us_per_km: float = 5.0,
    ):
        self.graph = graph
        self.rules = rules
        self.east_west_mode = east_west_mode
        self.propagation_us_per_km = propagation_us_per_km
        self.rules_version = 0
        self._paths: dict[tuple, Path] = {}
        self._delays: dict[tuple[str, str, int], int] = {}

    # ------------------------------------------------------------------ queries

    def role(self, node: str) -> NodeRole:
        return self.graph.nodes[node]["role"]

    def nodes_with_role(self, role: NodeRole) -> list[str]:
        return sorted((node for node, data in self.graph.nodes(data=True) if data["role"] is role), key=natural_key)

    def home_splitter(self, node: str) -> str:
        """Level-1 splitter an ONU site or edge-OLT site hangs off."""
        for neighbor in self.graph.neighbors(node):
            if self.role(neighbor) is NodeRole.LEVEL1:
                return neighbor
        raise TopologyError(f"{node} is not attached to a level-1 splitter")

    def xlink_neighbors(self, splitter: str) -> list[str]:
        return sorted(
            (n for n in self.graph.neighbors(splitter) if self.graph.edges[splitter, n]["kind"] == "xlink"),
            key=natural_key,
        )

    def port_at(self, u: str, v: str, node: str) -> PortClass | None:
        return self.graph.edges[u, v]["ports"].get(node)

    # ------------------------------------------------------------------ routing

    def route_wavelength(self, splitter: str, ingress: PortClass, channel: int) -> frozenset[PortClass]:
        if self.role(splitter) is not NodeRole.LEVEL1:
            raise TopologyError(f"{splitter} is not a level-1 splitter")
        return self.rules[splitter].egress(PortClass(ingress), channel)

    def update_rules(
        self,
        splitter: str,
        *,
        reflect: set[int] | None = None,
        xpass: set[int] | None = None,
        trunkpass: set[int] | None = None,
        remove: bool = False,
    ) -> SplitterRuleSet:
        """Add (or remove) channels from a splitter's rule sets; cached paths and delays are reset."""
        rule_set = self.rules[splitter]
        for target, channels in (
            (rule_set.reflect_set, reflect),
            (rule_set.xpass_set, xpass),
            (rule_set.trunkpass_set, trunkpass),
        ):
            if channels:
                if remove:
                    target.difference_update(channels)
                else:
                    target.update(channels)
        rule_set.validate(splitter)
        self.rules_version += 1
        self._paths.clear()
        self._delays.clear()
        return rule_set

    def _transit_allowed(self, node: str, ingress: PortClass | None, egress: PortClass | None, channel: int) -> bool:
        role = self.role(node)
        if role is NodeRole.LEVEL1:
            return egress in self.route_wavelength(node, ingress, channel) or ingress in self.route_wavelength(
                node, egress, channel
            )
        if role is NodeRole.LEVEL2:
            return {ingress, egress} == {PortClass.LOWER, PortClass.TRUNK}
        return False

    def resolve_path(self, src: str, dst: str, channel: int, mode: EastWestMode | str | None = None) -> Path:
        if src == dst:
            raise TopologyError("path endpoints must differ")
        mode = EastWestMode(mode) if mode is not None else self.east_west_mode
        key = (src, dst, channel, mode)
        if key in self._paths:
            return self._paths[key]

        best: Path | None = None
        for nodes in nx.all_simple_paths(self.graph, src, dst):
            if not self._valid(nodes, channel):
                continue
            path = self._expand(nodes, mode)
            if best is None or path.total_length_km < best.total_length_km:
                best = path
        if best is None:
            raise NoPathError(src, dst, channel)
        self._paths[key] = best
        return best

    def _valid(self, nodes: list[str], channel: int) -> bool:
        for prev, node, nxt in zip(nodes, nodes[1:], nodes[2:]):
            ingress = self.port_at(prev, node, node)
            egress = self.port_at(node, nxt, node)
            if not self._transit_allowed(node, ingress, egress, channel):
                return False
        return True

    def _expand(self, nodes: list[str], mode: EastWestMode) -> Path:
        links: list[FiberLink] = []
        for u, v in zip(nodes, nodes[1:]):
            data = self.graph.edges[u, v]
            ports = data["ports"]
            if data["kind"] == "xlink" and mode is EastWestMode.OVERLAY:
                hub = data["overlay_via"]
                first, second = self.graph.edges[u, hub]["length_km"], self.graph.edges[hub, v]["length_km"]
                links.append(FiberLink(u, PortClass.XLINK, hub, PortClass.LOWER, first, True))
                links.append(FiberLink(hub, PortClass.LOWER, v, PortClass.XLINK, second, True))
            else:
                links.append(FiberLink(u, ports.get(u), v, ports.get(v), data["length_km"]))
        return Path(tuple(nodes), tuple(links))

    # ------------------------------------------------------------------ delay

    def propagation_delay(self, path: Path) -> float:
        """Propagation delay in microseconds."""
        return path.total_length_km * self.propagation_us_per_km

    def propagation_delay_ns(self, path: Path) -> int:
        return int(round(self.propagation_delay(path) * NS_PER_US))

    def path_delay_ns(self, src: str, dst: str, channel: int) -> int:
        """Propagation delay of the routed path in the current mode, resolved once per rules version."""
        key = (src, dst, channel)
        delay = self._delays.get(key)
        if delay is None:
            delay = self._delays[key] = self.propagation_delay_ns(self.resolve_path(src, dst, channel))
        return delay


def _add_link(graph: nx.Graph, kind: str, u: str, u_port, v: str, v_port, length_km: float) -> None:
    if length_km < 0:
        raise TopologyError(f"link {u}-{v} has negative length {length_km}")
    graph.add_edge(u, v, kind=kind, length_km=float(length_km), ports={u: u_port, v: v_port})


def _add_node(graph: nx.Graph, node: str, role: NodeRole) -> None:
    if node in graph:
        raise TopologyError(f"duplicate node id '{node}'")
    graph.add_node(node, role=role)


@guard(config={"type": TopologyConfig})
def build_topology(config: TopologyConfig) -> OdnTopology:
    if not config.splitters:
        raise TopologyError("at least one level-1 splitter is required")
    if not config.onus:
        raise TopologyError("at least one ONU is required")

    graph = nx.Graph()
    _add_node(graph, config.co_id, NodeRole.CO)
    _add_node(graph, config.level2_id, NodeRole.LEVEL2)
    _add_link(graph, "feeder", config.co_id, PortClass.LOWER, config.level2_id, PortClass.TRUNK, config.feeder_km)

    rules: dict[str, SplitterRuleSet] = {}
    for splitter in config.splitters:
        _add_node(graph, splitter.id, NodeRole.LEVEL1)
        _add_link(graph, "trunk", splitter.id, PortClass.TRUNK, config.level2_id, PortClass.LOWER, splitter.trunk_km)
        rule_set = SplitterRuleSet(
            reflect_set=set(splitter.rules.reflect),
            xpass_set=set(splitter.rules.xpass),
            trunkpass_set=set(splitter.rules.trunkpass),
        )
        rule_set.validate(splitter.id)
        rules[splitter.id] = rule_set

    for splitter in config.splitters:
        if splitter.edge_olt:
            _add_node(graph, splitter.edge_olt, NodeRole.EDGE_OLT_SITE)
            _check_drop(config, splitter.edge_olt, config.edge_olt_drop_km)
            _add_link(graph, "drop", splitter.edge_olt, None, splitter.id, PortClass.LOWER, config.edge_olt_drop_km)

    for onu in config.onus:
        if onu.splitter not in rules:
            raise TopologyError(f"ONU '{onu.id}' has no parent splitter (unknown splitter '{onu.splitter}')")
        _add_node(graph, onu.id, NodeRole.ONU_SITE)
        graph.nodes[onu.id]["kind"] = onu.kind
        _check_drop(config, onu.id, onu.drop_km)
        _add_link(graph, "drop", onu.id, None, onu.splitter, PortClass.LOWER, onu.drop_km)

    for xlink in config.xlinks:
        for end in (xlink.a, xlink.b):
            if end not in rules:
                raise TopologyError(f"xlink {xlink.a}-{xlink.b} references missing splitter '{end}'")
        if xlink.a == xlink.b or graph.has_edge(xlink.a, xlink.b):
            raise TopologyError(f"invalid or repeated xlink {xlink.a}-{xlink.b}")
        length = config.direct_km if xlink.length_km is None else xlink.length_km
        _add_link(graph, "xlink", xlink.a, PortClass.XLINK, xlink.b, PortClass.XLINK, length)
        # Every splitter hangs off the single level-2 splitter, which carries the overlay legs
        graph.edges[xlink.a, xlink.b]["overlay_via"] = config.level2_id

    topology = OdnTopology(
        graph,
        rules,
        east_west_mode=EastWestMode(config.east_west_mode),
        propagation_us_per_km=config.propagation_us_per_km,
    )
    logger.info(
        "Built ODN with %d splitters, %d ONUs, %d xlinks (%s east-west)",
        len(config.splitters),
        len(config.onus),
        len(config.xlinks),
        config.east_west_mode,
    )
    return topology


def _check_drop(config: TopologyConfig, node: str, drop_km: float) -> None:
    if drop_km <= config.max_drop_km:
        return
    message = f"{node}: drop of {drop_km} km exceeds {config.max_drop_km} km"
    if config.drop_bound == "reject":
        raise TopologyError(message)
    if config.drop_bound == "warn":
        logger.warning(message)
