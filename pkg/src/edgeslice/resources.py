"""Hierarchical service-layer resource tree.

One tree per service-layer node (cloud or edge gateway). The tree supports
five resource kinds, CRUD with strict kind-nesting rules, a virtual
"latest instance" child on containers, and subscription matching that turns
mutations into notification primitives.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator
from urllib.parse import quote, unquote

from .errors import BadRequestError, NotFoundError

LATEST_SEGMENT = "la"

_UNSET = object()


class ResourceKind(Enum):
    CSE_BASE = 1
    AE = 2
    CONTAINER = 3
    CONTENT_INSTANCE = 4
    SUBSCRIPTION = 5


# id prefix per kind; ids look like "ci_0001"
ID_PREFIX = {
    ResourceKind.CSE_BASE: "cb",
    ResourceKind.AE: "ae",
    ResourceKind.CONTAINER: "cnt",
    ResourceKind.CONTENT_INSTANCE: "ci",
    ResourceKind.SUBSCRIPTION: "sub",
}

# Which child kinds may live under which parent kind. This table is the
# single source of truth for nesting legality.
LEGAL_CHILDREN = {
    ResourceKind.CSE_BASE: frozenset(
        {ResourceKind.AE, ResourceKind.CONTAINER, ResourceKind.SUBSCRIPTION}
    ),
    ResourceKind.AE: frozenset({ResourceKind.CONTAINER, ResourceKind.SUBSCRIPTION}),
    ResourceKind.CONTAINER: frozenset(
        {
            ResourceKind.CONTAINER,
            ResourceKind.CONTENT_INSTANCE,
            ResourceKind.SUBSCRIPTION,
        }
    ),
    ResourceKind.CONTENT_INSTANCE: frozenset(),
    ResourceKind.SUBSCRIPTION: frozenset(),
}


@dataclass
class Resource:
    """One node of the tree.

    ``content`` is only present on content instances; ``notification_target``
    (destination node id, destination resource path) only on subscriptions.
    """

    id: str
    name: str
    kind: ResourceKind
    parent_id: str | None
    creation_time: float
    last_modified_time: float
    content: bytes | None = None
    notification_target: tuple[str, str] | None = None
    labels: list[str] = field(default_factory=list)

    def snapshot(self) -> "Resource":
        return replace(self, labels=list(self.labels))


@dataclass(frozen=True)
class ResourcePath:
    """Structured address of a resource: cse label + name segments.

    ``latest=True`` denotes the virtual ``/la`` suffix resolving to the most
    recent content instance of a container.
    """

    cse_label: str
    segments: tuple[str, ...] = ()
    latest: bool = False

    @classmethod
    def parse(cls, text: str) -> "ResourcePath":
        parts = [p for p in text.split("/") if p != ""]
        if not parts:
            raise BadRequestError("empty resource path")
        latest = False
        if len(parts) > 1 and parts[-1] == LATEST_SEGMENT:
            latest = True
            parts = parts[:-1]
        return cls(cse_label=parts[0], segments=tuple(parts[1:]), latest=latest)

    def __str__(self) -> str:
        parts = [self.cse_label, *self.segments]
        if self.latest:
            parts.append(LATEST_SEGMENT)
        return "/".join(parts)

    def child(self, name: str) -> "ResourcePath":
        return ResourcePath(self.cse_label, self.segments + (name,))

    def parent(self) -> "ResourcePath":
        if not self.segments:
            raise BadRequestError("root path has no parent")
        return ResourcePath(self.cse_label, self.segments[:-1])

    def is_prefix_of(self, other: "ResourcePath") -> bool:
        return (
            self.cse_label == other.cse_label
            and other.segments[: len(self.segments)] == self.segments
        )

    def relative_segments(self, ancestor: "ResourcePath") -> tuple[str, ...]:
        if not ancestor.is_prefix_of(self):
            raise BadRequestError(f"{ancestor} is not an ancestor of {self}")
        return self.segments[len(ancestor.segments):]

    def rebase(self, old_root: "ResourcePath", new_root: "ResourcePath") -> "ResourcePath":
        rel = self.relative_segments(old_root)
        return ResourcePath(new_root.cse_label, new_root.segments + rel, self.latest)


@dataclass(frozen=True)
class ChangeEvent:
    """A committed mutation, consumed by subscription matching and sync."""

    event_id: str
    change: str  # "created" | "updated" | "deleted"
    path: ResourcePath
    resource: Resource
    old_name: str | None = None


class ManualClock:
    """Directly advanced virtual clock for tests and direct-mode use."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)

    def __call__(self) -> float:
        return self.now

    def advance(self, delta_ms: float) -> float:
        if delta_ms < 0:
            raise ValueError("clock cannot go backwards")
        self.now += delta_ms
        return self.now


def _check_name(name: str) -> None:
    if not name:
        raise BadRequestError("resource name must be nonempty")
    if "/" in name:
        raise BadRequestError(f"resource name may not contain '/': {name!r}")
    if name == LATEST_SEGMENT:
        raise BadRequestError(f"{LATEST_SEGMENT!r} is reserved for latest-instance addressing")


class ResourceTree:
    """Single-writer resource tree rooted at one CseBase.

    Mutations emit ChangeEvents into an internal queue the owner drains; an
    optional ``guard`` callback can veto writes (used to enforce edge
    authority over offloaded mirrors).
    """

    def __init__(self, cse_label: str, clock: Callable[[], float] | None = None):
        self.cse_label = cse_label
        self._clock = clock or (lambda: 0.0)
        self._nodes: dict[str, Resource] = {}
        self._children: dict[str, list[str]] = {}
        self._counters: dict[ResourceKind, int] = {k: 0 for k in ResourceKind}
        self._event_seq = 0
        self._events: list[ChangeEvent] = []
        self.guard: Callable[[ResourcePath, str], None] | None = None
        self._guard_bypass = 0
        root_id = self._mint_id(ResourceKind.CSE_BASE)
        now = self._clock()
        self._root_id = root_id
        self._nodes[root_id] = Resource(
            id=root_id,
            name=cse_label,
            kind=ResourceKind.CSE_BASE,
            parent_id=None,
            creation_time=now,
            last_modified_time=now,
        )
        self._children[root_id] = []

    # --- identity and lookup ---

    def _mint_id(self, kind: ResourceKind) -> str:
        self._counters[kind] += 1
        return f"{ID_PREFIX[kind]}_{self._counters[kind]:04d}"

    def _peek_id(self, kind: ResourceKind) -> str:
        return f"{ID_PREFIX[kind]}_{self._counters[kind] + 1:04d}"

    @property
    def root(self) -> Resource:
        return self._nodes[self._root_id]

    def __len__(self) -> int:
        return len(self._nodes)

    def get(self, resource_id: str) -> Resource:
        try:
            return self._nodes[resource_id]
        except KeyError:
            raise NotFoundError(f"no resource with id {resource_id!r}") from None

    def resource_ids(self) -> list[str]:
        return list(self._nodes)

    def children(self, resource_id: str) -> list[Resource]:
        return [self._nodes[c] for c in self._children.get(resource_id, [])]

    def resolve(self, path: ResourcePath) -> Resource:
        """Resolve a path to its resource, honouring the virtual /la suffix."""
        if path.cse_label != self.cse_label:
            raise NotFoundError(f"unknown cse label {path.cse_label!r} (tree is {self.cse_label!r})")
        node = self.root
        for seg in path.segments:
            nxt = None
            for child_id in self._children[node.id]:
                if self._nodes[child_id].name == seg:
                    nxt = self._nodes[child_id]
                    break
            if nxt is None:
                raise NotFoundError(f"no resource at {path}")
            node = nxt
        if path.latest:
            node = self.latest_instance(node)
        return node

    def latest_instance(self, container: Resource) -> Resource:
        """Content-instance child with the greatest creation time.

        Ties are broken by insertion order: the later-created sibling wins.
        """
        if container.kind != ResourceKind.CONTAINER:
            raise BadRequestError("latest-instance lookup requires a container")
        best: Resource | None = None
        for child in self.children(container.id):
            if child.kind != ResourceKind.CONTENT_INSTANCE:
                continue
            if best is None or child.creation_time >= best.creation_time:
                best = child
        if best is None:
            raise NotFoundError(f"container {container.name!r} has no content instances")
        return best

    def path_of(self, resource: Resource | str) -> ResourcePath:
        node = self.get(resource) if isinstance(resource, str) else resource
        segments: list[str] = []
        while node.parent_id is not None:
            segments.append(node.name)
            node = self._nodes[node.parent_id]
        return ResourcePath(self.cse_label, tuple(reversed(segments)))

    def walk(self, start_id: str | None = None) -> Iterator[Resource]:
        """Preorder traversal in insertion order."""
        stack = [start_id or self._root_id]
        while stack:
            node_id = stack.pop()
            yield self._nodes[node_id]
            stack.extend(reversed(self._children[node_id]))

    # --- mutation ---

    def _check_guard(self, path: ResourcePath, op: str) -> None:
        if self.guard is not None and self._guard_bypass == 0:
            self.guard(path, op)

    def unguarded(self):
        """Context manager suspending the write guard (sync-engine writes)."""
        tree = self

        class _Bypass:
            def __enter__(self):
                tree._guard_bypass += 1

            def __exit__(self, *exc):
                tree._guard_bypass -= 1
                return False

        return _Bypass()

    def _emit(self, change: str, path: ResourcePath, resource: Resource,
              old_name: str | None = None) -> ChangeEvent:
        self._event_seq += 1
        event = ChangeEvent(
            event_id=f"{self.cse_label}:{self._event_seq}",
            change=change,
            path=path,
            resource=resource.snapshot(),
            old_name=old_name,
        )
        self._events.append(event)
        return event

    def drain_events(self) -> list[ChangeEvent]:
        events, self._events = self._events, []
        return events

    def _validate_new_child(self, parent: Resource, kind: ResourceKind, name: str) -> None:
        _check_name(name)
        if kind not in LEGAL_CHILDREN[parent.kind]:
            raise BadRequestError(
                f"{kind.name} may not be created under {parent.kind.name}"
            )
        for sibling in self.children(parent.id):
            if sibling.name == name:
                raise BadRequestError(
                    f"sibling name {name!r} already exists under {parent.name!r}"
                )

    def create(
        self,
        parent_path: ResourcePath,
        kind: ResourceKind,
        name: str | None = None,
        *,
        content: bytes | None = None,
        notification_target: tuple[str, str] | None = None,
        labels: list[str] | None = None,
    ) -> ResourcePath:
        """Insert a resource; returns its full path and queues a ChangeEvent.

        An omitted name defaults to the id the tree mints (e.g. "ci_0001").
        """
        parent = self.resolve(parent_path)
        if name is None:
            name = self._peek_id(kind)
        self._validate_new_child(parent, kind, name)
        if content is not None and kind != ResourceKind.CONTENT_INSTANCE:
            raise BadRequestError("only content instances carry content")
        if kind == ResourceKind.CONTENT_INSTANCE and content is None:
            raise BadRequestError("content instance requires content")
        if notification_target is not None and kind != ResourceKind.SUBSCRIPTION:
            raise BadRequestError("only subscriptions carry a notification target")
        if kind == ResourceKind.SUBSCRIPTION and notification_target is None:
            raise BadRequestError("subscription requires a notification target")
        new_path = self.path_of(parent).child(name)
        self._check_guard(new_path, "create")
        now = self._clock()
        node = Resource(
            id=self._mint_id(kind),
            name=name,
            kind=kind,
            parent_id=parent.id,
            creation_time=now,
            last_modified_time=now,
            content=content,
            notification_target=notification_target,
            labels=list(labels or []),
        )
        self._nodes[node.id] = node
        self._children[node.id] = []
        self._children[parent.id].append(node.id)
        parent.last_modified_time = now
        self._emit("created", new_path, node)
        return new_path

    def graft(
        self,
        parent_path: ResourcePath,
        kind: ResourceKind,
        name: str,
        *,
        creation_time: float,
        content: bytes | None = None,
        notification_target: tuple[str, str] | None = None,
        labels: list[str] | None = None,
        emit_event: bool = False,
    ) -> ResourcePath:
        """Insert a replicated resource, preserving its source creation time.

        Used by offload import and mirror replay. Import grafts are silent;
        mirror replay grafts emit events so applications watching the mirror
        observe synchronized data.
        """
        parent = self.resolve(parent_path)
        self._validate_new_child(parent, kind, name)
        now = self._clock()
        node = Resource(
            id=self._mint_id(kind),
            name=name,
            kind=kind,
            parent_id=parent.id,
            creation_time=creation_time,
            last_modified_time=now,
            content=content,
            notification_target=notification_target,
            labels=list(labels or []),
        )
        self._nodes[node.id] = node
        self._children[node.id] = []
        self._children[parent.id].append(node.id)
        parent.last_modified_time = now
        path = self.path_of(node)
        if emit_event:
            self._emit("created", path, node)
        return path

    def update(
        self,
        path: ResourcePath,
        *,
        name: str | None = None,
        labels: list[str] | None = None,
        notification_target: tuple[str, str] | None = None,
        content: object = _UNSET,
        kind: object = _UNSET,
    ) -> Resource:
        """Replace named fields; content instances are immutable records."""
        node = self.resolve(path)
        if node.kind == ResourceKind.CONTENT_INSTANCE:
            raise BadRequestError("content instances are write-once")
        if kind is not _UNSET:
            raise BadRequestError("resource kind cannot be changed")
        if content is not _UNSET:
            raise BadRequestError("content cannot be updated")
        if notification_target is not None and node.kind != ResourceKind.SUBSCRIPTION:
            raise BadRequestError("only subscriptions carry a notification target")
        self._check_guard(self.path_of(node), "update")
        old_name = None
        if name is not None and name != node.name:
            _check_name(name)
            parent = self._nodes[node.parent_id] if node.parent_id else None
            if parent is None:
                raise BadRequestError("the root cannot be renamed")
            for sibling in self.children(parent.id):
                if sibling.id != node.id and sibling.name == name:
                    raise BadRequestError(f"sibling name {name!r} already exists")
            old_name = node.name
            node.name = name
        if labels is not None:
            node.labels = list(labels)
        if notification_target is not None:
            node.notification_target = notification_target
        node.last_modified_time = self._clock()
        self._emit("updated", self.path_of(node), node, old_name=old_name)
        return node

    def delete(self, path: ResourcePath) -> int:
        """Remove a subtree atomically; returns the number of removed nodes."""
        node = self.resolve(path)
        if node.id == self._root_id:
            raise BadRequestError("the root CseBase cannot be deleted")
        full_path = self.path_of(node)
        self._check_guard(full_path, "delete")
        doomed = [r.id for r in self.walk(node.id)]
        snapshot = node.snapshot()
        parent = self._nodes[node.parent_id]  # type: ignore[index]
        self._children[parent.id].remove(node.id)
        for rid in doomed:
            del self._nodes[rid]
            del self._children[rid]
        parent.last_modified_time = self._clock()
        self._emit("deleted", full_path, snapshot)
        return len(doomed)

    def retarget_subscription(self, subscription_id: str, target: tuple[str, str]) -> None:
        """Silent bookkeeping update of a sync subscription's target.

        Does not emit an event; used when a rename shifts mirror paths.
        """
        node = self.get(subscription_id)
        if node.kind != ResourceKind.SUBSCRIPTION:
            raise BadRequestError("retarget requires a subscription")
        node.notification_target = target

    # --- serialization ---

    def serialize(self) -> str:
        """Byte-stable textual dump: header line then preorder records."""
        counters = ",".join(
            f"{ID_PREFIX[k]}:{self._counters[k]}" for k in ResourceKind
        )
        lines = [
            _fields([("lbl", self.cse_label), ("ctr", counters), ("seq", str(self._event_seq))])
        ]
        for node in self.walk():
            lines.append(_resource_line(self, node))
        return "\n".join(lines) + "\n"

    @classmethod
    def deserialize(cls, text: str, clock: Callable[[], float] | None = None) -> "ResourceTree":
        lines = [ln for ln in text.split("\n") if ln]
        header = _parse_fields(lines[0])
        tree = cls.__new__(cls)
        tree.cse_label = header["lbl"]
        tree._clock = clock or (lambda: 0.0)
        tree._nodes = {}
        tree._children = {}
        tree._counters = {k: 0 for k in ResourceKind}
        for part in header["ctr"].split(","):
            prefix, _, value = part.partition(":")
            for kind, kp in ID_PREFIX.items():
                if kp == prefix:
                    tree._counters[kind] = int(value)
        tree._event_seq = int(header["seq"])
        tree._events = []
        tree.guard = None
        tree._guard_bypass = 0
        for line in lines[1:]:
            rec = _parse_fields(line)
            node = Resource(
                id=rec["id"],
                name=unquote(rec["nm"]),
                kind=ResourceKind(int(rec["ty"])),
                parent_id=rec["pid"] if rec["pid"] != "-" else None,
                creation_time=float(rec["ct"]),
                last_modified_time=float(rec["lt"]),
                content=base64.b64decode(rec["pc"]) if "pc" in rec else None,
                notification_target=_parse_target(rec["nt"]) if "nt" in rec else None,
                labels=[unquote(x) for x in rec["lb"].split(",")] if "lb" in rec else [],
            )
            tree._nodes[node.id] = node
            tree._children[node.id] = []
            if node.parent_id is None:
                tree._root_id = node.id
            else:
                tree._children[node.parent_id].append(node.id)
        return tree


def _fields(pairs: list[tuple[str, str]]) -> str:
    return ";".join(f"{k}={quote(v, safe='')}" for k, v in pairs)


def _parse_fields(line: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for part in line.split(";"):
        key, _, value = part.partition("=")
        out[key] = unquote(value)
    return out


def _parse_target(value: str) -> tuple[str, str]:
    node, _, path = value.partition("|")
    return (node, path)


def _resource_line(tree: ResourceTree, node: Resource) -> str:
    pairs = [
        ("id", node.id),
        ("pid", node.parent_id or "-"),
        ("ty", str(node.kind.value)),
        ("nm", node.name),
        ("ct", repr(node.creation_time)),
        ("lt", repr(node.last_modified_time)),
    ]
    if node.content is not None:
        pairs.append(("pc", base64.b64encode(node.content).decode("ascii")))
    if node.notification_target is not None:
        pairs.append(("nt", "|".join(node.notification_target)))
    if node.labels:
        pairs.append(("lb", ",".join(quote(x, safe="") for x in node.labels)))
    return _fields(pairs)


def trees_equal(a: ResourceTree, b: ResourceTree) -> bool:
    """Deep equality including ids, names, timestamps and contents."""
    if a.cse_label != b.cse_label or len(a) != len(b):
        return False
    for na, nb in zip(a.walk(), b.walk()):
        if (
            na.id != nb.id
            or na.name != nb.name
            or na.kind != nb.kind
            or na.parent_id != nb.parent_id
            or na.creation_time != nb.creation_time
            or na.last_modified_time != nb.last_modified_time
            or na.content != nb.content
            or na.notification_target != nb.notification_target
            or na.labels != nb.labels
        ):
            return False
    return True
