from dataclasses import dataclass, replace
from typing import Any, Callable, Counter as CounterType, Deque, Dict, List, Optional, Tuple
from collections import Counter, deque
from enum import Enum
import logging

from src.models import DuplicateJoin, InvariantError, NetworkMatrix, NoStandby

from .cost_model import network_cost


__all__ = [
    "NodeRole",
    "NodeRecord",
    "RegistryTable",
    "MessageKind",
    "Message",
    "OverlayNode",
    "Overlay",
]


logger = logging.getLogger(__name__)


class NodeRole(Enum):
    ROOT = "root"
    STANDBY = "standby"
    MEMBER = "member"


class MessageKind(Enum):
    JOIN = "join"
    JOIN_ACK = "join_ack"
    REGISTRY_REPLICATE = "registry_replicate"
    HEARTBEAT = "heartbeat"
    ROOT_FAILED = "root_failed"
    PROMOTE = "promote"
    PEER_LIST_REQUEST = "peer_list_request"
    PEER_LIST_RESPONSE = "peer_list_response"
    QUEUE_REPORT_REQUEST = "queue_report_request"
    QUEUE_REPORT_RESPONSE = "queue_report_response"
    MIGRATE_JOB = "migrate_job"


@dataclass(frozen=True)
class NodeRecord:
    node_id: str
    site_id: str
    availability: float
    resources: int
    role: NodeRole = NodeRole.MEMBER
    subgrid_id: Optional[str] = None
    alive: bool = True


RegistryTable = Dict[str, NodeRecord]


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: str
    receiver: str
    payload: Any = None
    subgrid_id: Optional[str] = None
    epoch: int = 0
    version: int = 0
    sequence: int = 0


class OverlayNode:
    def __init__(
        self, node_id: str, site_id: str, availability: float = 1.0, resources: int = 1
    ) -> None:
        """
        One machine of the grid and its view of the SubGrid it belongs to.

        Args:
            node_id (str): Unique id.
            site_id (str): Site the machine belongs to.
            availability (float, optional): Higher is better for root/standby duty. Defaults to 1.0.
            resources (int, optional): Size of the machine's site. Defaults to 1.
        """
        self.node_id = node_id
        self.site_id = site_id
        self.availability = float(availability)
        self.resources = int(resources)
        self.alive = True
        self.role: Optional[NodeRole] = None
        self.subgrid_id: Optional[str] = None
        self.root_id: Optional[str] = None
        self.pending: Optional[str] = None
        self.epoch = 0
        self.version = 0
        self.registry: RegistryTable = {}

    def __repr__(self) -> str:
        return (
            f"OverlayNode({self.node_id}, role={self.role and self.role.value}, "
            f"subgrid={self.subgrid_id}, alive={self.alive})"
        )

    def record(self, role: NodeRole = NodeRole.MEMBER) -> NodeRecord:
        return NodeRecord(
            self.node_id, self.site_id, self.availability, self.resources, role, self.subgrid_id
        )

    @property
    def standby_id(self) -> Optional[str]:
        for record in self.registry.values():
            if record.role is NodeRole.STANDBY:
                return record.node_id
        return None

    def reset(self) -> None:
        """Forget the SubGrid before joining again."""
        self.role = None
        self.subgrid_id = None
        self.root_id = None
        self.pending = None
        self.epoch = 0
        self.version = 0
        self.registry = {}

    def found(self, subgrid_id: str) -> None:
        """Become the root of a new SubGrid."""
        self.reset()
        self.role = NodeRole.ROOT
        self.subgrid_id = subgrid_id
        self.root_id = self.node_id
        self.registry = {self.node_id: self.record(NodeRole.ROOT)}

    def _stale(self, msg: Message) -> bool:
        """Messages from another SubGrid or an older registry state are ignored."""
        if msg.subgrid_id is None or msg.subgrid_id not in (self.subgrid_id, self.pending):
            return True
        if msg.subgrid_id != self.subgrid_id:
            return False
        return (msg.epoch, msg.version) < (self.epoch, self.version)

    def _adopt(self, msg: Message) -> None:
        self.subgrid_id = msg.subgrid_id
        self.pending = None
        self.epoch = msg.epoch
        self.version = msg.version
        self.root_id = msg.sender

    def _message(self, kind: MessageKind, receiver: str, payload: Any = None) -> Message:
        return Message(
            kind, self.node_id, receiver, payload, self.subgrid_id, self.epoch, self.version
        )

    def handle(self, msg: Message, probe: Callable[[str], bool]) -> List[Message]:
        """
        Consume one message.

        Args:
            msg (Message): The delivered message.
            probe (Callable[[str], bool]): Liveness check used when taking over as root.

        Returns:
            List[Message]: Messages to send in response.
        """
        match msg.kind:
            case MessageKind.JOIN:
                return self._on_join(msg)
            case MessageKind.JOIN_ACK | MessageKind.PROMOTE:
                return self._on_role(msg)
            case MessageKind.REGISTRY_REPLICATE:
                return self._on_replicate(msg)
            case MessageKind.HEARTBEAT:
                return self._on_missed(msg)
            case MessageKind.ROOT_FAILED:
                return self._on_root_failed(msg, probe)
            case _:
                return []

    def _elect_standby(self) -> List[Message]:
        """Pick the live non-root with the highest availability; tell a demoted standby."""
        old = self.standby_id
        candidates = [
            record
            for record in self.registry.values()
            if record.alive and record.node_id != self.node_id
        ]
        new = (
            min(candidates, key=lambda r: (-r.availability, r.node_id)).node_id
            if candidates
            else None
        )

        out = []
        if old != new:
            if old is not None:
                self.registry[old] = replace(self.registry[old], role=NodeRole.MEMBER)
                if self.registry[old].alive:
                    out.append(
                        self._message(MessageKind.PROMOTE, old, {"role": NodeRole.MEMBER})
                    )
            if new is not None:
                self.registry[new] = replace(self.registry[new], role=NodeRole.STANDBY)
        return out

    def _replicate(self) -> List[Message]:
        standby = self.standby_id
        if standby is None:
            return []
        return [self._message(MessageKind.REGISTRY_REPLICATE, standby, dict(self.registry))]

    def _on_join(self, msg: Message) -> List[Message]:
        if self.role is not NodeRole.ROOT:
            return []

        joining: NodeRecord = msg.payload
        self.version += 1
        self.registry[joining.node_id] = replace(
            joining, role=NodeRole.MEMBER, subgrid_id=self.subgrid_id, alive=True
        )
        out = self._elect_standby()
        out += self._replicate()
        out.append(
            self._message(
                MessageKind.JOIN_ACK, joining.node_id,
                {"role": self.registry[joining.node_id].role},
            )
        )
        return out

    def _on_role(self, msg: Message) -> List[Message]:
        if self._stale(msg) or self.role is NodeRole.ROOT:
            return []

        role = msg.payload["role"]
        # A replicated registry can arrive before the acknowledgement
        if role is NodeRole.STANDBY and self.role is NodeRole.STANDBY:
            return []

        self._adopt(msg)
        self.role = role
        if role is NodeRole.MEMBER:
            self.registry = {}
        return []

    def _on_replicate(self, msg: Message) -> List[Message]:
        if self._stale(msg) or self.role is NodeRole.ROOT:
            return []

        self._adopt(msg)
        self.role = NodeRole.STANDBY
        self.registry = dict(msg.payload)
        return []

    def _on_missed(self, msg: Message) -> List[Message]:
        if self.role is not NodeRole.ROOT or not msg.payload:
            return []

        missed = msg.payload.get("missed")
        if missed not in self.registry or missed == self.node_id:
            return []

        self.version += 1
        self.registry[missed] = replace(
            self.registry[missed], alive=False, role=NodeRole.MEMBER
        )
        return self._elect_standby() + self._replicate()

    def _on_root_failed(self, msg: Message, probe: Callable[[str], bool]) -> List[Message]:
        if self._stale(msg) or self.role is not NodeRole.STANDBY or msg.sender != self.root_id:
            return []

        old_root = msg.sender
        self.role = NodeRole.ROOT
        self.root_id = self.node_id
        self.epoch += 1
        self.version += 1

        # Sweep liveness before picking a new standby
        for node_id, record in list(self.registry.items()):
            self.registry[node_id] = replace(
                record,
                alive=node_id == self.node_id or (node_id != old_root and probe(node_id)),
                role=NodeRole.ROOT if node_id == self.node_id else NodeRole.MEMBER,
            )

        out = self._elect_standby() + self._replicate()
        standby = self.standby_id
        for record in sorted(self.registry.values(), key=lambda r: r.node_id):
            if record.alive and record.node_id not in (self.node_id, standby):
                out.append(
                    self._message(MessageKind.PROMOTE, record.node_id, {"role": NodeRole.MEMBER})
                )
        logger.info(
            f"[bold]{self.node_id}[/] took over SubGrid {self.subgrid_id} from {old_root} "
            f"(epoch {self.epoch})"
        )
        return out


class Overlay:
    def __init__(
        self,
        edges: Optional[NetworkMatrix] = None,
        subgrid_min: int = 0,
        record_trace: bool = False,
    ) -> None:
        """
        RootGrid/SubGrid peer to peer topology over simulated FIFO channels.

        Args:
            edges (NetworkMatrix, optional): Links used to find the nearest SubGrid.
            subgrid_min (int, optional): Site size from which a site founds its own SubGrid. Defaults to 0.
            record_trace (bool, optional): Keep every delivered message. Defaults to False.
        """
        self.edges = dict(edges or {})
        self.subgrid_min = int(subgrid_min)
        self.record_trace = bool(record_trace)
        self.nodes: Dict[str, OverlayNode] = {}
        self.directory: Dict[str, str] = {}
        self.site_subgrid: Dict[str, str] = {}
        self.channels: Dict[Tuple[str, str], Deque[Message]] = {}
        self.counts: CounterType[MessageKind] = Counter()
        self.trace: List[Message] = []
        self._sequence = 0
        self._subgrids = 0

    # ---------------------------------------------------------------- network

    def send(self, msg: Message) -> None:
        msg = replace(msg, sequence=self._next_sequence())
        # Registry replication is synchronous
        if msg.kind is MessageKind.REGISTRY_REPLICATE:
            self._deliver(msg)
            return
        self.channels.setdefault((msg.sender, msg.receiver), deque()).append(msg)

    def record(self, kind: MessageKind, sender: str, receiver: str, payload: Any = None) -> Message:
        """Account for a message whose effect the caller applies itself."""
        msg = Message(kind, sender, receiver, payload, sequence=self._next_sequence())
        self._count(msg)
        return msg

    def _next_sequence(self) -> int:
        self._sequence += 1
        return self._sequence

    def _count(self, msg: Message) -> None:
        self.counts[msg.kind] += 1
        if self.record_trace:
            self.trace.append(msg)

    def pending_channels(self) -> List[Tuple[str, str]]:
        return sorted(key for key, queue in self.channels.items() if queue)

    def deliver_next(self, channel: Tuple[str, str]) -> Message:
        """Deliver the oldest message of one channel."""
        queue = self.channels.get(channel)
        if not queue:
            raise InvariantError(f"Channel {channel} has nothing to deliver.")
        msg = queue.popleft()
        self._deliver(msg)
        return msg

    def settle(self, limit: int = 1_000_000) -> int:
        """Deliver messages in send order until every channel is empty."""
        delivered = 0
        while delivered < limit:
            pending = [queue[0] for queue in self.channels.values() if queue]
            if not pending:
                return delivered
            first = min(pending, key=lambda msg: msg.sequence)
            self.deliver_next((first.sender, first.receiver))
            delivered += 1
        raise InvariantError(f"Overlay did not settle after {limit} messages.")

    def _deliver(self, msg: Message) -> None:
        self._count(msg)
        receiver = self.nodes.get(msg.receiver)

        if receiver is None or not receiver.alive:
            self._undeliverable(msg)
            return

        if msg.kind is MessageKind.JOIN and receiver.role is not NodeRole.ROOT:
            self._undeliverable(msg)
            return

        for out in receiver.handle(msg, self._alive):
            self.send(out)

        if receiver.role is NodeRole.ROOT and receiver.subgrid_id is not None:
            current = self.directory.get(receiver.subgrid_id)
            if current != receiver.node_id and (current is None or not self._alive(current)):
                self.directory[receiver.subgrid_id] = receiver.node_id

    def _undeliverable(self, msg: Message) -> None:
        match msg.kind:
            case MessageKind.JOIN:
                joiner = self.nodes[msg.sender]
                if joiner.alive and joiner.role is None:
                    self._request_join(joiner)
            case MessageKind.ROOT_FAILED:
                self._dissolve(msg.subgrid_id, msg.sender)
            case _:
                logger.debug(f"Dropped {msg.kind.value} {msg.sender} -> {msg.receiver}")

    def _alive(self, node_id: str) -> bool:
        node = self.nodes.get(node_id)
        return node is not None and node.alive

    # ------------------------------------------------------------- membership

    def _live_subgrids(self) -> Dict[str, str]:
        return {sg: root for sg, root in self.directory.items() if self._alive(root)}

    def _distance(self, site: str, other: str) -> float:
        if site == other or (site, other) not in self.edges:
            return 0.0
        return network_cost(self.edges[(site, other)])

    def _request_join(self, node: OverlayNode) -> None:
        live = self._live_subgrids()
        subgrid = self.site_subgrid.get(node.site_id)

        if subgrid in live:
            target = live[subgrid]
        elif not live or node.resources >= self.subgrid_min:
            self._subgrids += 1
            subgrid = f"sg{self._subgrids}"
            node.found(subgrid)
            self.directory[subgrid] = node.node_id
            self.site_subgrid[node.site_id] = subgrid
            logger.debug(f"{node.node_id} founded SubGrid {subgrid}")
            return
        else:
            subgrid, target = min(
                live.items(),
                key=lambda item: (
                    self._distance(node.site_id, self.nodes[item[1]].site_id),
                    item[1],
                ),
            )
            self.site_subgrid[node.site_id] = subgrid

        node.pending = subgrid
        self.send(Message(MessageKind.JOIN, node.node_id, target, node.record(), subgrid))

    def join(
        self,
        site_id: str,
        node_id: Optional[str] = None,
        availability: float = 1.0,
        resources: int = 1,
    ) -> str:
        """
        Add a machine to the grid. The join completes once its messages are delivered.

        Args:
            site_id (str): Site of the machine.
            node_id (str, optional): Id to use. Defaults to the next free "<site>/<k>".
            availability (float, optional): Availability score. Defaults to 1.0.
            resources (int, optional): Size of the machine's site. Defaults to 1.

        Returns:
            str: The node id.

        Raises:
            DuplicateJoin: If the node already joined.
        """
        if node_id is None:
            index = sum(1 for node in self.nodes.values() if node.site_id == site_id)
            node_id = f"{site_id}/{index}"
        if node_id in self.nodes:
            raise DuplicateJoin(f"Node {node_id} has already joined the overlay.")

        node = OverlayNode(node_id, site_id, availability, resources)
        self.nodes[node_id] = node
        self._request_join(node)
        return node_id

    def crash(self, node_id: str) -> None:
        """Stop a node. Nobody notices until ``detect`` runs."""
        node = self.nodes.get(node_id)
        if node is None:
            raise InvariantError(f"Node {node_id} is not part of the overlay.")
        node.alive = False
        logger.debug(f"{node_id} crashed")

    def detect(self, node_id: str) -> None:
        """The failure detector reports a crashed node to whoever must react."""
        node = self.nodes[node_id]
        subgrid = node.subgrid_id or node.pending
        if node.alive or subgrid is None:
            return

        root = self.directory.get(subgrid)

        if root == node_id:
            standby = node.standby_id
            if standby is not None and self._alive(standby):
                self.send(
                    Message(
                        MessageKind.ROOT_FAILED, node_id, standby, None,
                        subgrid, node.epoch, node.version,
                    )
                )
            else:
                self._dissolve(subgrid, node_id)
        elif root is not None and self._alive(root):
            self.send(
                Message(
                    MessageKind.HEARTBEAT, node_id, root, {"missed": node_id},
                    subgrid, node.epoch, node.version,
                )
            )

    def _dissolve(self, subgrid: Optional[str], root_id: str) -> None:
        """A SubGrid lost both root and standby: its live members join again."""
        if subgrid is None or self.directory.get(subgrid) != root_id:
            return

        members = [
            self.nodes[node_id]
            for node_id in sorted(self.nodes[root_id].registry)
            if node_id in self.nodes
        ]
        members += [
            node
            for node in self.nodes.values()
            if subgrid in (node.subgrid_id, node.pending) and node not in members
        ]

        del self.directory[subgrid]
        logger.warning(f"[yellow][WARNING][/] SubGrid {subgrid} lost its root and standby")

        for node in members:
            if node.alive and subgrid in (node.subgrid_id, node.pending):
                node.reset()
                self._request_join(node)

    def fail_root(self, subgrid: str) -> str:
        """
        Crash a SubGrid's root and let its standby take over.

        Returns:
            str: The new root.

        Raises:
            NoStandby: If the SubGrid has no other live node.
        """
        root_id = self.directory.get(subgrid)
        if root_id is None or not self._alive(root_id):
            raise InvariantError(f"SubGrid {subgrid} has no live root.")

        root = self.nodes[root_id]
        others = [
            r for r in root.registry.values() if r.alive and r.node_id != root_id and self._alive(r.node_id)
        ]
        if not others:
            raise NoStandby(f"SubGrid {subgrid} has a single node; nobody can take over.")

        self.crash(root_id)
        self.detect(root_id)
        self.settle()
        return self.directory[subgrid]

    # ---------------------------------------------------------------- queries

    def roots(self) -> List[str]:
        return sorted(self._live_subgrids().values())

    def subgrid_sites(self, subgrid: str) -> List[str]:
        return sorted(
            {
                node.site_id
                for node in self.nodes.values()
                if node.alive and node.subgrid_id == subgrid
            }
        )

    def peer_list(self, root_id: str) -> List[str]:
        """Every other live root. Only roots may ask."""
        node = self.nodes.get(root_id)
        if node is None or not node.alive or node.role is not NodeRole.ROOT:
            raise InvariantError(f"Only a live root can ask for peers. Got {root_id} instead.")
        return [root for root in self.roots() if root != root_id]

    def root_of_site(self, site_id: str) -> Optional[str]:
        """Live root serving a site, if any of the site's machines is reachable."""
        live = self._live_subgrids()
        for node in sorted(self.nodes.values(), key=lambda n: n.node_id):
            if node.site_id == site_id and node.alive and node.subgrid_id in live:
                return live[node.subgrid_id]
        return None

    def site_reachable(self, site_id: str) -> bool:
        return self.root_of_site(site_id) is not None

    def query_peers(self, site_id: str) -> List[str]:
        """
        Sites a site's meta-scheduler can reach, as its root learns them from peer roots.

        Returns:
            List[str]: Reachable sites other than ``site_id``.
        """
        root = self.root_of_site(site_id)
        if root is None:
            return []

        sites = set(self.subgrid_sites(self.nodes[root].subgrid_id))
        for peer in self.peer_list(root):
            self.record(MessageKind.PEER_LIST_REQUEST, root, peer)
            self.record(MessageKind.PEER_LIST_RESPONSE, peer, root)
            sites.update(self.subgrid_sites(self.nodes[peer].subgrid_id))

        sites.discard(site_id)
        return sorted(site for site in sites if self.site_reachable(site))

    # ------------------------------------------------------------- checking

    def violations(self) -> List[str]:
        """Broken topology rules at a quiescent instant. Empty when healthy."""
        problems = []
        live = self._live_subgrids()

        for subgrid, root_id in live.items():
            roots = [
                node.node_id
                for node in self.nodes.values()
                if node.alive and node.subgrid_id == subgrid and node.role is NodeRole.ROOT
            ]
            if roots != [root_id]:
                problems.append(f"SubGrid {subgrid} has roots {roots}")

            root = self.nodes[root_id]
            standby = root.standby_id
            if standby is not None and self._alive(standby):
                if self.nodes[standby].registry != root.registry:
                    problems.append(f"SubGrid {subgrid}: standby {standby} registry differs")

        for node in self.nodes.values():
            if not node.alive:
                continue
            if node.subgrid_id not in live:
                problems.append(f"{node.node_id} belongs to no live SubGrid")
                continue
            root = self.nodes[live[node.subgrid_id]]
            record = root.registry.get(node.node_id)
            if record is None or not record.alive:
                problems.append(f"{node.node_id} missing from registry of {root.node_id}")
            if node.root_id != root.node_id:
                problems.append(f"{node.node_id} follows {node.root_id}, not {root.node_id}")

        return problems

    def fingerprint(self) -> Tuple:
        """Hashable summary of every node and in-flight message."""
        nodes = tuple(
            (
                node.node_id,
                node.alive,
                node.role,
                node.subgrid_id,
                node.root_id,
                node.epoch,
                tuple(sorted((r.node_id, r.role, r.alive) for r in node.registry.values())),
            )
            for node in sorted(self.nodes.values(), key=lambda n: n.node_id)
        )
        channels = tuple(
            (key, tuple((m.kind, m.subgrid_id, m.epoch, _freeze(m.payload)) for m in queue))
            for key, queue in sorted(self.channels.items())
            if queue
        )
        return nodes, channels, tuple(sorted(self.directory.items()))


def _freeze(payload: Any) -> Any:
    if isinstance(payload, NodeRecord):
        return payload.node_id
    if isinstance(payload, dict):
        return tuple(sorted((key, _freeze(value)) for key, value in payload.items()))
    return payload
