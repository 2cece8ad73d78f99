"""Task offloading and cloud/edge synchronization.

A task is a resource subtree owned by one service. Offloading exports it
from the cloud tree as an ordered bundle, grafts it onto an edge tree under
the same grouping segments, and keeps the retained cloud copy (the mirror)
consistent: eagerly via per-container subscriptions that replay every edge
change onto the mirror, or lazily by redirecting cloud reads to the edge and
reconciling the mirror when the slice terminates. The edge is authoritative
for an offloaded subtree for the binding's whole lifetime.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator

from .errors import (
    AlreadyBoundError,
    AlreadyOffloadedError,
    BadRequestError,
    ConflictError,
    NotFoundError,
    UnknownBindingError,
)
from .notify import NotifyPrimitive, match_subscriptions
from .primitives import decode_fieldline, encode_fieldline
from .resources import ChangeEvent, Resource, ResourceKind, ResourcePath, ResourceTree

SYNC_SUB_NAME = "sync"


class SyncMode(Enum):
    EAGER = "eager"
    LAZY = "lazy"


@dataclass(frozen=True)
class Task:
    task_id: str
    root_path: ResourcePath
    owner_service: str


@dataclass(frozen=True)
class BundleRecord:
    source_path: str
    kind: ResourceKind
    name: str
    creation_time: float
    content: bytes | None = None


@dataclass(frozen=True)
class OffloadBundle:
    """Topologically ordered subtree export; parents precede children."""

    task_id: str
    exported_at: float
    records: tuple[BundleRecord, ...]

    def encode(self) -> str:
        lines = [
            encode_fieldline(
                [
                    ("tid", self.task_id),
                    ("at", repr(self.exported_at)),
                    ("n", str(len(self.records))),
                ]
            )
        ]
        for rec in self.records:
            pairs = [
                ("pt", rec.source_path),
                ("ty", str(rec.kind.value)),
                ("nm", rec.name),
                ("ct", repr(rec.creation_time)),
            ]
            if rec.content is not None:
                pairs.append(("pc", base64.b64encode(rec.content).decode("ascii")))
            lines.append(encode_fieldline(pairs))
        return "\n".join(lines) + "\n"

    @classmethod
    def decode(cls, text: str) -> "OffloadBundle":
        lines = [ln for ln in text.split("\n") if ln]
        if not lines:
            raise BadRequestError("empty bundle")
        header = decode_fieldline(lines[0])
        records = []
        for line in lines[1:]:
            rec = decode_fieldline(line)
            records.append(
                BundleRecord(
                    source_path=rec["pt"],
                    kind=ResourceKind(int(rec["ty"])),
                    name=rec["nm"],
                    creation_time=float(rec["ct"]),
                    content=base64.b64decode(rec["pc"]) if "pc" in rec else None,
                )
            )
        bundle = cls(header["tid"], float(header["at"]), tuple(records))
        if len(records) != int(header["n"]):
            raise BadRequestError("bundle record count mismatch")
        return bundle


@dataclass
class SyncStats:
    notifications_applied: int = 0
    duplicates: int = 0
    stale_dropped: int = 0
    skipped_subscriptions: int = 0
    redirects_served: int = 0


@dataclass
class SyncBinding:
    task_id: str
    mode: SyncMode
    edge: str
    cloud_mirror_root: ResourcePath
    edge_root: ResourcePath
    stats: SyncStats = field(default_factory=SyncStats)
    seen_request_ids: set[str] = field(default_factory=set)
    open: bool = True


@dataclass(frozen=True)
class SyncReport:
    task_id: str
    mode: SyncMode
    synced_resources: int


@dataclass(frozen=True)
class EdgeSyncInfo:
    """What the edge side needs to keep an eager binding healthy."""

    task_id: str
    edge_root: ResourcePath
    mirror_root: ResourcePath
    cloud_node: str


def make_bundle(
    tree: ResourceTree, root_path: ResourcePath, task_id: str, exported_at: float
) -> OffloadBundle:
    """Preorder snapshot of a subtree, excluding subscriptions."""
    root = tree.resolve(root_path)
    if root.kind not in (ResourceKind.AE, ResourceKind.CONTAINER):
        raise BadRequestError("a task root must be an Ae or a Container")
    records = []
    for node in tree.walk(root.id):
        if node.kind is ResourceKind.SUBSCRIPTION:
            continue
        records.append(
            BundleRecord(
                source_path=str(tree.path_of(node)),
                kind=node.kind,
                name=node.name,
                creation_time=node.creation_time,
                content=node.content,
            )
        )
    return OffloadBundle(task_id=task_id, exported_at=exported_at, records=tuple(records))


def import_bundle(edge_tree: ResourceTree, bundle: OffloadBundle) -> ResourcePath:
    """Graft a bundle onto the edge tree.

    Paths keep their grouping segments with the cse label rewritten to the
    edge tree's label; missing grouping containers are created on the fly.
    Source creation times are preserved; ids are minted by the edge tree.
    """
    if not bundle.records:
        raise BadRequestError("bundle has no records")
    now_root_src = ResourcePath.parse(bundle.records[0].source_path)
    root_target = ResourcePath(edge_tree.cse_label, now_root_src.segments)
    # grouping segments above the task root
    parent = ResourcePath(edge_tree.cse_label)
    for segment in root_target.segments[:-1]:
        candidate = parent.child(segment)
        try:
            edge_tree.resolve(candidate)
        except NotFoundError:
            edge_tree.graft(
                parent,
                ResourceKind.CONTAINER,
                segment,
                creation_time=bundle.exported_at,
            )
        parent = candidate
    try:
        edge_tree.resolve(root_target)
    except NotFoundError:
        pass
    else:
        raise ConflictError(f"{root_target} already exists on the edge tree")
    for rec in bundle.records:
        src = ResourcePath.parse(rec.source_path)
        if not now_root_src.is_prefix_of(src):
            raise BadRequestError("bundle record outside the task root")
        dst = ResourcePath(edge_tree.cse_label, src.segments)
        try:
            edge_tree.resolve(dst.parent())
        except NotFoundError:
            raise BadRequestError(
                f"malformed bundle ordering: parent of {rec.source_path} missing"
            ) from None
        edge_tree.graft(
            dst.parent(),
            rec.kind,
            rec.name,
            creation_time=rec.creation_time,
            content=rec.content,
        )
    return root_target


def iter_containers(tree: ResourceTree, root_path: ResourcePath) -> Iterator[Resource]:
    root = tree.resolve(root_path)
    for node in tree.walk(root.id):
        if node.kind is ResourceKind.CONTAINER:
            yield node


def create_sync_subscriptions(
    edge_tree: ResourceTree,
    edge_root: ResourcePath,
    mirror_root: ResourcePath,
    cloud_node: str,
) -> int:
    """One subscription per container in the offloaded subtree, targeting the
    container's mirror path on the cloud.

    Subscriptions observe a container's children, so an Ae-rooted task with
    no containers yields zero subscriptions; direct children added under
    such a root reach the mirror at finalize time, not eagerly.
    """
    count = 0
    for container in list(iter_containers(edge_tree, edge_root)):
        container_path = edge_tree.path_of(container)
        mirror_path = container_path.rebase(edge_root, mirror_root)
        edge_tree.create(
            container_path,
            ResourceKind.SUBSCRIPTION,
            SYNC_SUB_NAME,
            notification_target=(cloud_node, str(mirror_path)),
        )
        count += 1
    return count


def maintain_sync_subscriptions(
    edge_tree: ResourceTree, info: EdgeSyncInfo, event: ChangeEvent
) -> None:
    """Keep the one-subscription-per-container invariant across edge changes.

    New containers inside the bound subtree get their own sync subscription;
    renaming a container re-targets every sync subscription underneath it.
    """
    if event.resource.kind is not ResourceKind.CONTAINER:
        return
    if not info.edge_root.is_prefix_of(event.path):
        return
    if event.change == "created":
        mirror_path = event.path.rebase(info.edge_root, info.mirror_root)
        edge_tree.create(
            event.path,
            ResourceKind.SUBSCRIPTION,
            SYNC_SUB_NAME,
            notification_target=(info.cloud_node, str(mirror_path)),
        )
    elif event.change == "updated" and event.old_name is not None:
        renamed = edge_tree.resolve(event.path)
        for node in edge_tree.walk(renamed.id):
            if node.kind is ResourceKind.SUBSCRIPTION and node.name == SYNC_SUB_NAME:
                observed = edge_tree.path_of(node).parent()
                mirror_path = observed.rebase(info.edge_root, info.mirror_root)
                edge_tree.retarget_subscription(node.id, (info.cloud_node, str(mirror_path)))


def process_edge_events(
    edge_tree: ResourceTree,
    events: list[ChangeEvent],
    infos: "list[EdgeSyncInfo] | tuple[EdgeSyncInfo, ...]" = (),
) -> list[NotifyPrimitive]:
    """Synchronous edge-side handling of committed changes.

    Matching and sync-subscription maintenance must run at mutation time
    (they read current tree state); only the returned notifications may be
    delivered later. Maintenance-created subscriptions cascade here.
    """
    notifies: list[NotifyPrimitive] = []
    queue = list(events)
    while queue:
        event = queue.pop(0)
        notifies.extend(match_subscriptions(edge_tree, event))
        for info in infos:
            maintain_sync_subscriptions(edge_tree, info, event)
        queue.extend(edge_tree.drain_events())
    return notifies


def setup_eager_sync(
    coordinator: "OffloadCoordinator",
    edge_tree: ResourceTree,
    task: Task,
    edge_node: str,
    cloud_node: str,
) -> "tuple[SyncBinding, EdgeSyncInfo, int]":
    """Direct-mode convenience: register the binding and create the per-
    container sync subscriptions in one step."""
    edge_root = ResourcePath(edge_tree.cse_label, task.root_path.segments)
    binding = coordinator.register_binding(task, SyncMode.EAGER, edge_node, edge_root)
    count = create_sync_subscriptions(edge_tree, edge_root, task.root_path, cloud_node)
    info = EdgeSyncInfo(task.task_id, edge_root, task.root_path, cloud_node)
    return binding, info, count


class OffloadCoordinator:
    """Cloud-side bookkeeping: exports, bindings, redirects, reconciliation.

    Installs a write guard on the cloud tree so nothing but the sync engine
    touches a mirrored subtree while its binding is open.
    """

    def __init__(self, cloud_tree: ResourceTree, clock: Callable[[], float] | None = None):
        self.cloud_tree = cloud_tree
        self._clock = clock or (lambda: 0.0)
        self.bindings: dict[str, SyncBinding] = {}
        self.offloaded: set[str] = set()
        cloud_tree.guard = self._guard

    def _guard(self, path: ResourcePath, op: str) -> None:
        for binding in self.bindings.values():
            if binding.open and binding.cloud_mirror_root.is_prefix_of(path):
                raise ConflictError(
                    f"{binding.task_id!r} is offloaded; the edge is authoritative for {path}"
                )

    # --- export / import ---

    def export_task(self, task: Task) -> OffloadBundle:
        if task.task_id in self.offloaded:
            raise AlreadyOffloadedError(f"task {task.task_id!r} is already offloaded")
        bundle = make_bundle(
            self.cloud_tree, task.root_path, task.task_id, self._clock()
        )
        self.offloaded.add(task.task_id)
        return bundle

    # --- bindings ---

    def register_binding(
        self, task: Task, mode: SyncMode, edge: str, edge_root: ResourcePath
    ) -> SyncBinding:
        if task.task_id not in self.offloaded:
            raise BadRequestError(f"task {task.task_id!r} has not been offloaded")
        if task.task_id in self.bindings:
            raise AlreadyBoundError(f"task {task.task_id!r} already has a sync binding")
        binding = SyncBinding(
            task_id=task.task_id,
            mode=mode,
            edge=edge,
            cloud_mirror_root=task.root_path,
            edge_root=edge_root,
        )
        self.bindings[task.task_id] = binding
        return binding

    def register_redirect(self, task: Task, edge: str) -> SyncBinding:
        edge_root = ResourcePath("MN-CSE", task.root_path.segments)
        return self.register_binding(task, SyncMode.LAZY, edge, edge_root)

    def binding_of(self, task_id: str) -> SyncBinding:
        binding = self.bindings.get(task_id)
        if binding is None:
            raise UnknownBindingError(f"no open binding for task {task_id!r}")
        return binding

    def bindings_on_edge(self, edge: str) -> list[SyncBinding]:
        return [b for b in self.bindings.values() if b.edge == edge]

    # --- lazy redirects ---

    def redirect_for(self, path: ResourcePath) -> "tuple[SyncBinding, ResourcePath] | None":
        for binding in self.bindings.values():
            if binding.mode is SyncMode.LAZY and binding.cloud_mirror_root.is_prefix_of(path):
                return binding, path.rebase(binding.cloud_mirror_root, binding.edge_root)
        return None

    # --- eager replay ---

    def apply_notification(self, notify: NotifyPrimitive) -> str:
        """Replay one edge change onto the mirror.

        Returns "applied", "duplicate", "stale" or "skipped"; replays are
        idempotent per request id, and notifications about subscriptions are
        never replicated.
        """
        target = ResourcePath.parse(notify.target_path)
        binding = None
        for candidate in self.bindings.values():
            if candidate.cloud_mirror_root.is_prefix_of(target):
                binding = candidate
                break
        if binding is None:
            raise UnknownBindingError(f"no binding covers {notify.target_path}")
        if notify.request_id in binding.seen_request_ids:
            binding.stats.duplicates += 1
            return "duplicate"
        binding.seen_request_ids.add(notify.request_id)
        view = notify.view()
        if view.kind is ResourceKind.SUBSCRIPTION:
            binding.stats.skipped_subscriptions += 1
            return "skipped"
        try:
            with self.cloud_tree.unguarded():
                if notify.change == "created":
                    self.cloud_tree.graft(
                        target,
                        view.kind,
                        view.name,
                        creation_time=view.creation_time,
                        content=view.content,
                        labels=list(view.labels),
                        emit_event=True,
                    )
                elif notify.change == "updated":
                    previous = notify.old_name or view.name
                    self.cloud_tree.update(
                        target.child(previous),
                        name=view.name if view.name != previous else None,
                        labels=list(view.labels),
                    )
                elif notify.change == "deleted":
                    self.cloud_tree.delete(target.child(view.name))
                else:
                    raise BadRequestError(f"unknown change kind {notify.change!r}")
        except (NotFoundError, BadRequestError):
            binding.stats.stale_dropped += 1
            return "stale"
        binding.stats.notifications_applied += 1
        return "applied"

    # --- reconciliation ---

    def finalize(self, task_id: str, edge_snapshot: OffloadBundle) -> SyncReport:
        """Settle a binding against a snapshot of the edge subtree.

        Lazy bindings receive the full diff; eager bindings are verified (and
        repaired, which is a no-op at quiescence). The binding closes and the
        task becomes exportable again.
        """
        binding = self.binding_of(task_id)
        changed = apply_snapshot(
            self.cloud_tree, binding.cloud_mirror_root, edge_snapshot
        )
        binding.open = False
        del self.bindings[task_id]
        self.offloaded.discard(task_id)
        return SyncReport(task_id=task_id, mode=binding.mode, synced_resources=changed)


# --- snapshot diff (keyed-by-name recursive merge) ---


class _SnapshotNode:
    __slots__ = ("record", "children")

    def __init__(self, record: BundleRecord):
        self.record = record
        self.children: dict[str, _SnapshotNode] = {}


def _snapshot_index(bundle: OffloadBundle) -> _SnapshotNode:
    root = _SnapshotNode(bundle.records[0])
    by_path = {bundle.records[0].source_path: root}
    for rec in bundle.records[1:]:
        parent_path = rec.source_path.rsplit("/", 1)[0]
        parent = by_path.get(parent_path)
        if parent is None:
            raise BadRequestError(f"malformed bundle ordering at {rec.source_path}")
        node = _SnapshotNode(rec)
        parent.children[rec.name] = node
        by_path[rec.source_path] = node
    return root


def apply_snapshot(
    cloud_tree: ResourceTree, mirror_root: ResourcePath, snapshot: OffloadBundle
) -> int:
    """Make the mirror subtree match the snapshot; returns changed-node count.

    Subscriptions on the mirror (cloud applications keep observing it) are
    left alone; content instances are matched by name and replaced when
    content or creation time disagree.
    """
    root = _snapshot_index(snapshot)
    with cloud_tree.unguarded():
        return _merge_children(cloud_tree, mirror_root, root)


def _merge_children(
    tree: ResourceTree, mirror_path: ResourcePath, snap: _SnapshotNode
) -> int:
    changed = 0
    mirror = tree.resolve(mirror_path)
    mirror_children = {
        child.name: child
        for child in tree.children(mirror.id)
        if child.kind is not ResourceKind.SUBSCRIPTION
    }
    for name, snap_child in snap.children.items():
        mirror_child = mirror_children.pop(name, None)
        child_path = mirror_path.child(name)
        if mirror_child is not None:
            rec = snap_child.record
            same_kind = mirror_child.kind is rec.kind
            same_payload = (
                mirror_child.kind is not ResourceKind.CONTENT_INSTANCE
                or (
                    mirror_child.content == rec.content
                    and mirror_child.creation_time == rec.creation_time
                )
            )
            if same_kind and same_payload:
                changed += _merge_children(tree, child_path, snap_child)
                continue
            changed += tree.delete(child_path)
            mirror_child = None
        changed += _graft_snapshot(tree, mirror_path, snap_child)
    for name, orphan in mirror_children.items():
        changed += tree.delete(mirror_path.child(name))
    return changed


def _graft_snapshot(
    tree: ResourceTree, parent_path: ResourcePath, snap: _SnapshotNode
) -> int:
    rec = snap.record
    path = tree.graft(
        parent_path,
        rec.kind,
        rec.name,
        creation_time=rec.creation_time,
        content=rec.content,
        emit_event=True,
    )
    count = 1
    for child in snap.children.values():
        count += _graft_snapshot(tree, path, child)
    return count


def subtrees_converged(
    cloud_tree: ResourceTree,
    mirror_root: ResourcePath,
    edge_tree: ResourceTree,
    edge_root: ResourcePath,
) -> bool:
    """Deep equality of mirror and edge subtrees over replicated state:
    names, kinds, contents, and instance order by creation time.
    Subscriptions live on one side only by design and are ignored."""

    def describe(tree: ResourceTree, path: ResourcePath):
        node = tree.resolve(path)
        children = [
            c for c in tree.children(node.id) if c.kind is not ResourceKind.SUBSCRIPTION
        ]
        ordered_names = [
            c.name
            for c in sorted(
                (c for c in children if c.kind is ResourceKind.CONTENT_INSTANCE),
                key=lambda c: c.creation_time,
            )
        ]
        return node, children, ordered_names

    def walk(mirror_path: ResourcePath, edge_path: ResourcePath) -> bool:
        try:
            m_node, m_children, m_order = describe(cloud_tree, mirror_path)
            e_node, e_children, e_order = describe(edge_tree, edge_path)
        except NotFoundError:
            return False
        if m_node.kind is not e_node.kind or m_node.name != e_node.name:
            return False
        if m_node.kind is ResourceKind.CONTENT_INSTANCE and (
            m_node.content != e_node.content
            or m_node.creation_time != e_node.creation_time
        ):
            return False
        if {c.name for c in m_children} != {c.name for c in e_children}:
            return False
        if m_order != e_order:
            return False
        return all(
            walk(mirror_path.child(c.name), edge_path.child(c.name)) for c in m_children
        )

    return walk(mirror_root, edge_root)
