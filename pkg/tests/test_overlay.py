from typing import List
import copy

import pytest

from src.components import MessageKind, NodeRole, Overlay
from src.models import DuplicateJoin, NoStandby

from .conftest import full_mesh


def _grid(layout, subgrid_min: int = 0) -> Overlay:
    """Overlay where every site of ``layout`` (site id -> machines) joined and settled."""
    overlay = Overlay(full_mesh(list(layout)), subgrid_min=subgrid_min)
    for site_id, machines in layout.items():
        for _ in range(machines):
            overlay.join(site_id, resources=machines)
            overlay.settle()
    return overlay


def test_first_node_founds_a_subgrid():
    overlay = _grid({"s1": 3})
    root = overlay.nodes["s1/0"]

    assert overlay.roots() == ["s1/0"]
    assert root.role is NodeRole.ROOT
    assert overlay.nodes["s1/1"].role is NodeRole.STANDBY
    assert overlay.nodes["s1/2"].role is NodeRole.MEMBER
    assert overlay.nodes["s1/1"].registry == root.registry
    assert sorted(root.registry) == ["s1/0", "s1/1", "s1/2"]
    assert overlay.violations() == []


def test_standby_is_the_most_available_node():
    overlay = Overlay()
    overlay.join("s1", availability=0.5)
    overlay.join("s1", availability=0.7)
    overlay.settle()
    overlay.join("s1", availability=0.9)
    overlay.settle()

    assert overlay.nodes["s1/0"].standby_id == "s1/2"
    assert overlay.nodes["s1/1"].role is NodeRole.MEMBER
    assert overlay.violations() == []


def test_double_join_is_rejected():
    overlay = _grid({"s1": 1})
    with pytest.raises(DuplicateJoin):
        overlay.join("s1", node_id="s1/0")


def test_standby_takes_over():
    overlay = _grid({"s1": 3, "s2": 2})
    new_root = overlay.fail_root("sg1")

    assert new_root == "s1/1"
    assert overlay.nodes[new_root].epoch == 1
    assert overlay.nodes["s1/2"].role is NodeRole.STANDBY
    assert overlay.nodes["s1/2"].root_id == "s1/1"
    assert not overlay.nodes[new_root].registry["s1/0"].alive
    assert overlay.violations() == []
    assert overlay.site_reachable("s1")


def test_lonely_root_has_no_standby():
    overlay = _grid({"s1": 1})
    with pytest.raises(NoStandby):
        overlay.fail_root("sg1")


def test_member_crash_is_recorded():
    overlay = _grid({"s1": 3})
    overlay.crash("s1/1")
    overlay.detect("s1/1")
    overlay.settle()

    root = overlay.nodes["s1/0"]
    assert not root.registry["s1/1"].alive
    assert root.standby_id == "s1/2"
    assert overlay.nodes["s1/2"].registry == root.registry
    assert overlay.violations() == []


def test_losing_root_and_standby_dissolves_the_subgrid():
    overlay = _grid({"s1": 4, "s2": 1})
    for node_id in ("s1/1", "s1/0"):
        overlay.crash(node_id)
        overlay.detect(node_id)
    overlay.settle()

    assert "sg1" not in overlay.directory
    assert overlay.nodes["s1/2"].role is NodeRole.ROOT
    assert overlay.nodes["s1/3"].root_id == "s1/2"
    assert overlay.violations() == []


def test_dead_site_drops_out_of_peer_lists():
    overlay = _grid({"s1": 1, "s2": 1, "s3": 1})
    assert overlay.query_peers("s1") == ["s2", "s3"]
    assert overlay.counts[MessageKind.PEER_LIST_REQUEST] == 2

    overlay.crash("s2/0")
    overlay.detect("s2/0")
    overlay.settle()

    assert not overlay.site_reachable("s2")
    assert overlay.query_peers("s1") == ["s3"]
    assert overlay.roots() == ["s1/0", "s3/0"]


def test_small_sites_join_the_nearest_subgrid():
    overlay = _grid({"big": 1, "tiny": 1}, subgrid_min=2)

    assert overlay.roots() == ["big/0"]
    assert overlay.nodes["tiny/0"].subgrid_id == overlay.nodes["big/0"].subgrid_id
    assert overlay.subgrid_sites("sg1") == ["big", "tiny"]
    assert overlay.query_peers("tiny") == ["big"]


def test_messages_always_touch_a_root():
    overlay = Overlay(full_mesh(["s1", "s2", "s3"]), record_trace=True)
    roots = set()

    def step(action, *args):
        action(*args)
        overlay.settle()
        roots.update(overlay.directory.values())

    for site_id, machines in {"s1": 4, "s2": 2, "s3": 1}.items():
        for _ in range(machines):
            step(overlay.join, site_id, None, 1.0, machines)
    step(overlay.query_peers, "s2")
    step(overlay.crash, "s1/3")
    step(overlay.detect, "s1/3")
    step(overlay.fail_root, "sg1")
    step(overlay.query_peers, "s3")

    assert {msg.kind for msg in overlay.trace} >= {
        MessageKind.JOIN, MessageKind.HEARTBEAT, MessageKind.ROOT_FAILED, MessageKind.PEER_LIST_REQUEST
    }
    for msg in overlay.trace:
        assert msg.sender in roots or msg.receiver in roots, msg
        if msg.kind in (MessageKind.PEER_LIST_REQUEST, MessageKind.PEER_LIST_RESPONSE):
            assert msg.sender in roots and msg.receiver in roots, msg


def _explore(overlay: Overlay, max_crashes: int) -> int:
    """Every delivery order and crash point; topology rules must hold whenever nothing is in flight."""
    seen = set()
    stack = [(overlay, 0)]
    quiescent = 0

    while stack:
        state, crashes = stack.pop()
        key = (state.fingerprint(), crashes)
        if key in seen:
            continue
        seen.add(key)

        channels = state.pending_channels()
        if not channels:
            quiescent += 1
            assert state.violations() == [], state.fingerprint()

        for channel in channels:
            branch = copy.deepcopy(state)
            branch.deliver_next(channel)
            stack.append((branch, crashes))

        alive: List[str] = sorted(n for n, node in state.nodes.items() if node.alive)
        if crashes < max_crashes and len(alive) > 1:
            for node_id in alive:
                branch = copy.deepcopy(state)
                branch.crash(node_id)
                branch.detect(node_id)
                stack.append((branch, crashes + 1))

    return quiescent


def test_every_interleaving_keeps_the_topology():
    overlay = _grid({"s1": 3, "s2": 2})
    assert _explore(overlay, max_crashes=2) > 1


@pytest.mark.slow
def test_every_interleaving_with_three_crashes():
    overlay = _grid({"s1": 4, "s2": 2})
    assert _explore(overlay, max_crashes=3) > 1
