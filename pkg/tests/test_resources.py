import random

import pytest

from edgeslice.errors import BadRequestError, ConflictError, NotFoundError
from edgeslice.notify import match_subscriptions
from edgeslice.resources import (
    ManualClock,
    ResourceKind,
    ResourcePath,
    ResourceTree,
    trees_equal,
)

from util import (
    RandomTreeWorkload,
    brute_force_latest,
    build_demo_tree,
    check_tree_invariants,
    legal_child_oracle,
)


@pytest.fixture
def clock():
    return ManualClock()


@pytest.fixture
def tree(clock):
    return ResourceTree("MN-CSE", clock)


def location_path():
    return ResourcePath.parse("MN-CSE/Pedestrians/CitizenB/location")


def make_location_tree(clock):
    return build_demo_tree("MN-CSE", clock)


class TestPaths:
    def test_parse_round_trip(self):
        p = ResourcePath.parse("MN-CSE/Pedestrians/CitizenB/location")
        assert p.cse_label == "MN-CSE"
        assert p.segments == ("Pedestrians", "CitizenB", "location")
        assert str(p) == "MN-CSE/Pedestrians/CitizenB/location"

    def test_latest_suffix(self):
        p = ResourcePath.parse("MN-CSE/a/b/la")
        assert p.latest and p.segments == ("a", "b")
        assert str(p) == "MN-CSE/a/b/la"

    def test_bare_label_is_root(self):
        p = ResourcePath.parse("IN-CSE")
        assert p.segments == () and not p.latest

    def test_rebase_swaps_label_and_root(self):
        src = ResourcePath.parse("IN-CSE/Cars/CarA/location")
        old_root = ResourcePath.parse("IN-CSE/Cars/CarA")
        new_root = ResourcePath.parse("MN-CSE/Cars/CarA")
        assert str(src.rebase(old_root, new_root)) == "MN-CSE/Cars/CarA/location"


class TestCreate:
    def test_create_content_instance_under_location(self, clock):
        tree = make_location_tree(clock)
        payload = bytes(400)
        path = tree.create(
            location_path(), ResourceKind.CONTENT_INSTANCE, "ci_a", content=payload
        )
        assert str(path) == "MN-CSE/Pedestrians/CitizenB/location/ci_a"
        assert tree.resolve(path).content == payload

    def test_minted_ids_are_sequential_per_kind(self, clock):
        tree = make_location_tree(clock)
        p1 = tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "x", content=b"1")
        p2 = tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "y", content=b"2")
        assert tree.resolve(p1).id == "ci_0001"
        assert tree.resolve(p2).id == "ci_0002"

    def test_unnamed_create_takes_its_minted_id_as_name(self, clock):
        tree = make_location_tree(clock)
        path = tree.create(
            location_path(), ResourceKind.CONTENT_INSTANCE, content=bytes(400)
        )
        assert str(path) == "MN-CSE/Pedestrians/CitizenB/location/ci_0001"
        assert tree.resolve(path).id == "ci_0001"

    def test_create_cse_base_anywhere_is_rejected(self, tree):
        with pytest.raises(BadRequestError):
            tree.create(ResourcePath("MN-CSE"), ResourceKind.CSE_BASE, "root2")

    def test_kind_nesting_full_enumeration(self):
        """All 25 (parent, child) pairs against the legality table oracle."""
        for parent_kind in ResourceKind:
            for child_kind in ResourceKind:
                clock = ManualClock()
                tree = ResourceTree("T", clock)
                root = ResourcePath("T")
                if parent_kind is ResourceKind.CSE_BASE:
                    parent_path = root
                elif parent_kind is ResourceKind.AE:
                    parent_path = tree.create(root, ResourceKind.AE, "p")
                elif parent_kind is ResourceKind.CONTAINER:
                    parent_path = tree.create(root, ResourceKind.CONTAINER, "p")
                elif parent_kind is ResourceKind.CONTENT_INSTANCE:
                    c = tree.create(root, ResourceKind.CONTAINER, "c")
                    parent_path = tree.create(
                        c, ResourceKind.CONTENT_INSTANCE, "p", content=b"v"
                    )
                else:
                    parent_path = tree.create(
                        root,
                        ResourceKind.SUBSCRIPTION,
                        "p",
                        notification_target=("n", "T/x"),
                    )
                kwargs = {}
                if child_kind is ResourceKind.CONTENT_INSTANCE:
                    kwargs["content"] = b"v"
                if child_kind is ResourceKind.SUBSCRIPTION:
                    kwargs["notification_target"] = ("n", "T/x")
                legal = legal_child_oracle(parent_kind, child_kind)
                if legal:
                    tree.create(parent_path, child_kind, "kid", **kwargs)
                else:
                    with pytest.raises(BadRequestError):
                        tree.create(parent_path, child_kind, "kid", **kwargs)

    def test_duplicate_sibling_name_rejected(self, clock):
        tree = make_location_tree(clock)
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"1")
        with pytest.raises(BadRequestError):
            tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"2")

    def test_slash_and_reserved_names_rejected(self, tree):
        with pytest.raises(BadRequestError):
            tree.create(ResourcePath("MN-CSE"), ResourceKind.CONTAINER, "a/b")
        with pytest.raises(BadRequestError):
            tree.create(ResourcePath("MN-CSE"), ResourceKind.CONTAINER, "la")

    def test_missing_parent_is_not_found(self, tree):
        with pytest.raises(NotFoundError):
            tree.create(
                ResourcePath.parse("MN-CSE/nowhere"), ResourceKind.CONTAINER, "x"
            )

    def test_parent_last_modified_advances(self, clock):
        tree = make_location_tree(clock)
        parent = tree.resolve(location_path())
        clock.advance(5.0)
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"1")
        assert parent.last_modified_time == clock()


class TestRetrieve:
    def test_root_by_label(self, tree):
        assert tree.resolve(ResourcePath.parse("MN-CSE")).kind is ResourceKind.CSE_BASE

    def test_latest_returns_most_recent(self, clock):
        tree = make_location_tree(clock)
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci_1", content=b"1")
        clock.advance(3.0)
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci_2", content=b"2")
        got = tree.resolve(ResourcePath.parse("MN-CSE/Pedestrians/CitizenB/location/la"))
        assert got.name == "ci_2"

    def test_latest_tie_breaks_to_later_insertion(self, clock):
        tree = make_location_tree(clock)
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "first", content=b"1")
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "second", content=b"2")
        got = tree.resolve(ResourcePath.parse("MN-CSE/Pedestrians/CitizenB/location/la"))
        assert got.name == "second"

    def test_latest_on_empty_container_not_found(self, clock):
        tree = make_location_tree(clock)
        with pytest.raises(NotFoundError):
            tree.resolve(ResourcePath.parse("MN-CSE/Pedestrians/CitizenB/location/la"))

    def test_latest_matches_brute_force_on_random_trees(self):
        for k in range(1, 11):
            rng = random.Random(1000 + k)
            clock = ManualClock()
            tree = make_location_tree(clock)
            for i in range(k):
                clock.advance(rng.choice([0.0, 1.0, 2.5]))
                tree.create(
                    location_path(),
                    ResourceKind.CONTENT_INSTANCE,
                    f"ci{i}",
                    content=bytes([i]),
                )
            container = tree.resolve(location_path())
            oracle = brute_force_latest(tree, container)
            assert tree.latest_instance(container).id == oracle.id


class TestUpdate:
    def test_update_labels(self, clock):
        tree = ResourceTree("MN-CSE", clock)
        path = tree.create(ResourcePath("MN-CSE"), ResourceKind.AE, "app")
        clock.advance(2.0)
        updated = tree.update(path, labels=["v2"])
        assert updated.labels == ["v2"]
        assert updated.last_modified_time == 2.0 > updated.creation_time

    def test_update_content_instance_rejected(self, clock):
        tree = make_location_tree(clock)
        path = tree.create(
            location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v"
        )
        with pytest.raises(BadRequestError):
            tree.update(path, labels=["x"])

    def test_empty_patch_only_advances_last_modified(self, clock):
        tree = ResourceTree("MN-CSE", clock)
        path = tree.create(ResourcePath("MN-CSE"), ResourceKind.AE, "app", labels=["a"])
        before = tree.resolve(path).snapshot()
        clock.advance(1.0)
        after = tree.update(path)
        assert after.name == before.name
        assert after.labels == before.labels
        assert after.last_modified_time > before.last_modified_time

    def test_rename_checks_collisions(self, clock):
        tree = ResourceTree("MN-CSE", clock)
        tree.create(ResourcePath("MN-CSE"), ResourceKind.AE, "a")
        path_b = tree.create(ResourcePath("MN-CSE"), ResourceKind.AE, "b")
        with pytest.raises(BadRequestError):
            tree.update(path_b, name="a")
        renamed = tree.update(path_b, name="c")
        assert renamed.name == "c"
        assert tree.resolve(ResourcePath.parse("MN-CSE/c")).id == renamed.id

    def test_kind_change_rejected(self, clock):
        tree = ResourceTree("MN-CSE", clock)
        path = tree.create(ResourcePath("MN-CSE"), ResourceKind.AE, "app")
        with pytest.raises(BadRequestError):
            tree.update(path, kind=ResourceKind.CONTAINER)


class TestDelete:
    def test_subtree_count(self, clock):
        tree = make_location_tree(clock)
        loc = location_path()
        for i in range(3):
            tree.create(loc, ResourceKind.CONTENT_INSTANCE, f"ci{i}", content=b"v")
        tree.create(
            loc, ResourceKind.SUBSCRIPTION, "watch", notification_target=("n", "X/y")
        )
        # independent count: size of the subtree before deletion
        expected = sum(1 for _ in tree.walk(tree.resolve(loc).id))
        assert expected == 5
        assert tree.delete(loc) == 5
        with pytest.raises(NotFoundError):
            tree.resolve(loc)

    def test_delete_root_rejected(self, tree):
        with pytest.raises(BadRequestError):
            tree.delete(ResourcePath("MN-CSE"))

    def test_delete_leaf(self, clock):
        tree = make_location_tree(clock)
        path = tree.create(
            location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v"
        )
        assert tree.delete(path) == 1


class TestSubscriptionMatching:
    def test_single_subscription_fires_on_create(self, clock):
        tree = make_location_tree(clock)
        tree.create(
            location_path(),
            ResourceKind.SUBSCRIPTION,
            "watch",
            notification_target=("cloud", "IN-CSE/mirror/location"),
        )
        tree.drain_events()
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v")
        (event,) = tree.drain_events()
        notifies = match_subscriptions(tree, event)
        assert len(notifies) == 1
        n = notifies[0]
        assert n.target_node == "cloud"
        assert n.target_path == "IN-CSE/mirror/location"
        assert n.change == "created"
        assert n.view().content == b"v"

    def test_no_subscription_no_notify(self, clock):
        tree = make_location_tree(clock)
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v")
        (event,) = tree.drain_events()
        assert match_subscriptions(tree, event) == []

    def test_two_subscriptions_fire_in_creation_order(self, clock):
        tree = make_location_tree(clock)
        tree.create(
            location_path(),
            ResourceKind.SUBSCRIPTION,
            "w1",
            notification_target=("n1", "A/p"),
        )
        tree.create(
            location_path(),
            ResourceKind.SUBSCRIPTION,
            "w2",
            notification_target=("n2", "B/q"),
        )
        tree.drain_events()
        ci = tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v")
        tree.update(ci.parent(), labels=["seen"])  # container update fires its parent's subs, not these
        events = tree.drain_events()
        create_event = events[0]
        notifies = match_subscriptions(tree, create_event)
        # oracle: walk every subscription in the tree, apply the matching rule
        expected = []
        for node in tree.walk():
            if node.kind is ResourceKind.SUBSCRIPTION:
                parent = tree.get(node.parent_id)
                if tree.path_of(parent) == create_event.path.parent():
                    expected.append(node.notification_target[0])
        assert [n.target_node for n in notifies] == expected == ["n1", "n2"]

    def test_subscription_does_not_observe_itself(self, clock):
        tree = make_location_tree(clock)
        tree.create(
            location_path(),
            ResourceKind.SUBSCRIPTION,
            "w1",
            notification_target=("n1", "A/p"),
        )
        (event,) = tree.drain_events()
        assert match_subscriptions(tree, event) == []

    def test_deletion_notifies_with_snapshot(self, clock):
        tree = make_location_tree(clock)
        tree.create(
            location_path(),
            ResourceKind.SUBSCRIPTION,
            "w",
            notification_target=("n", "A/p"),
        )
        ci = tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v")
        tree.drain_events()
        tree.delete(ci)
        (event,) = tree.drain_events()
        (notify,) = match_subscriptions(tree, event)
        assert notify.change == "deleted"
        assert notify.view().name == "ci"


class TestSerialization:
    def test_round_trip_deep_equal(self, clock):
        tree = make_location_tree(clock)
        tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"\x00\xffbin")
        tree.create(
            location_path(),
            ResourceKind.SUBSCRIPTION,
            "w",
            notification_target=("cloud", "IN-CSE/m"),
            labels=["sync, priority", "b|c"],
        )
        text = tree.serialize()
        again = ResourceTree.deserialize(text)
        assert trees_equal(tree, again)
        assert again.serialize() == text

    def test_serialize_is_byte_stable(self, clock):
        tree = make_location_tree(clock)
        assert tree.serialize() == tree.serialize()

    def test_counters_survive_round_trip(self, clock):
        tree = make_location_tree(clock)
        restored = ResourceTree.deserialize(tree.serialize(), clock)
        p = restored.create(
            location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v"
        )
        assert restored.resolve(p).id == "ci_0001"


class TestGuard:
    def test_guard_blocks_and_bypass_allows(self, clock):
        tree = make_location_tree(clock)

        def deny(path, op):
            raise ConflictError("frozen")

        tree.guard = deny
        with pytest.raises(ConflictError):
            tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v")
        with tree.unguarded():
            tree.create(location_path(), ResourceKind.CONTENT_INSTANCE, "ci", content=b"v")


class TestRandomWorkload:
    def test_invariants_hold_under_random_ops(self):
        rng = random.Random(7)
        clock = ManualClock()
        tree = ResourceTree("MN-CSE", clock)
        workload = RandomTreeWorkload(tree, clock, rng)
        for _ in range(40):
            workload.run(25)
            check_tree_invariants(tree)
        assert workload.attempted == 1000

    def test_round_trip_after_random_ops(self):
        rng = random.Random(11)
        clock = ManualClock()
        tree = ResourceTree("MN-CSE", clock)
        RandomTreeWorkload(tree, clock, rng).run(300)
        again = ResourceTree.deserialize(tree.serialize())
        assert trees_equal(tree, again)
