"""Slice orchestration: request matching, edge selection, instantiation.

The cloud-side management entities and the edge-resident request handler
collapse into one orchestrator object with two views: the registry (what is
actually running, per worker) and the handler view (what the request matcher
believes is running). A service request only takes the fast path when the
handler view already covers its profile.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import (
    BadRequestError,
    NoEdgeAvailableError,
    NoRouteError,
    UnknownSliceError,
)
from .images import ImageCatalogue, pull_image
from .netsim import NodeRole, Topology
from .resources import ManualClock
from .slicing import (
    FunctionKind,
    PlanDecision,
    SliceInstance,
    SliceProfile,
    SliceState,
    SlicingPlan,
    ordered,
)
from .worker import EdgeWorker, ResourceQuota

DEFAULT_QUOTA = ResourceQuota(max_memory_bytes=256_000_000, max_cpu_share=0.25)


@dataclass(frozen=True)
class ServiceRequest:
    device: str
    service_id: str
    profile: SliceProfile


class SliceOrchestrator:
    def __init__(
        self,
        topology: Topology,
        catalogue: ImageCatalogue,
        *,
        clock: Callable[[], float] | None = None,
        default_quota: ResourceQuota = DEFAULT_QUOTA,
    ):
        self.topology = topology
        self.catalogue = catalogue
        self._clock = clock or (lambda: 0.0)
        self.default_quota = default_quota
        self.registry: dict[str, SliceInstance] = {}
        self._handler_view: dict[str, set[FunctionKind]] = {}
        self.decision_log: list[dict] = []

    # --- naming ---

    @staticmethod
    def slice_id_for(edge: str) -> str:
        return f"slice-{edge}"

    @staticmethod
    def edge_of(slice_id: str) -> str:
        if not slice_id.startswith("slice-"):
            raise UnknownSliceError(f"malformed slice id {slice_id!r}")
        return slice_id[len("slice-"):]

    # --- decisions ---

    def select_edge_node(self, device: str) -> str:
        """Closest edge by one-way delay; ties by load, then node id."""
        candidates = []
        for edge in self.topology.by_role(NodeRole.EDGE_WORKER):
            try:
                delay = self.topology.path_delay_ms(device, edge)
            except NoRouteError:
                continue
            load = sum(
                1
                for inst in self.registry.values()
                if inst.edge_node == edge and inst.state is SliceState.ACTIVE
            )
            candidates.append((delay, load, edge))
        if not candidates:
            raise NoEdgeAvailableError(f"no edge worker reachable from {device!r}")
        return min(candidates)[2]

    def handle_service_request(self, req: ServiceRequest) -> SlicingPlan:
        """Pure decision: fast path iff the selected edge already covers the
        profile with an active slice."""
        edge = self.select_edge_node(req.device)
        slice_id = self.slice_id_for(edge)
        instance = self.registry.get(slice_id)
        view = self._handler_view.get(edge, set())
        required = req.profile.required_functions
        if (
            instance is not None
            and instance.state is SliceState.ACTIVE
            and required <= view
        ):
            plan = SlicingPlan(PlanDecision.FAST_PATH_OFFLOAD_ONLY, slice_id, frozenset())
        else:
            plan = SlicingPlan(
                PlanDecision.INSTANTIATE_THEN_OFFLOAD,
                slice_id,
                frozenset(required - view),
            )
        self.decision_log.append(
            {
                "ts": self._clock(),
                "service": req.service_id,
                "device": req.device,
                "edge": edge,
                "latency_class": req.profile.latency_class.value,
                "decision": plan.decision.value,
                "missing": [f.name for f in ordered(plan.missing_functions)],
            }
        )
        return plan

    # --- instantiation ---

    def instantiation_steps(self, plan: SlicingPlan, version: str = "latest"):
        """Images to pull/start, in fixed function order."""
        return [
            self.catalogue.lookup(fn, version) for fn in ordered(plan.missing_functions)
        ]

    def ensure_instance(self, slice_id: str, edge: str) -> SliceInstance:
        instance = self.registry.get(slice_id)
        if instance is None:
            instance = SliceInstance(slice_id=slice_id, edge_node=edge)
            self.registry[slice_id] = instance
        return instance

    def mark_active(
        self, slice_id: str, service_id: str, started: dict[FunctionKind, int]
    ) -> SliceInstance:
        instance = self.registry.get(slice_id)
        if instance is None:
            raise UnknownSliceError(slice_id)
        instance.running_functions.update(started)
        instance.state = SliceState.ACTIVE
        instance.served_services.add(service_id)
        return instance

    def instantiate_slice(
        self,
        plan: SlicingPlan,
        edge: str,
        *,
        worker: EdgeWorker,
        clock: ManualClock,
        pull_bandwidth_bytes_per_s: float,
        service_id: str = "",
        quota: ResourceQuota | None = None,
    ) -> tuple[SliceInstance, float]:
        """Direct-mode instantiation: pulls and starts run back to back.

        Returns the instance and the elapsed virtual time (sum of cache-miss
        pull durations plus one start delay per function). Partial failures
        roll back every function this call started.
        """
        if plan.decision is not PlanDecision.INSTANTIATE_THEN_OFFLOAD:
            raise BadRequestError("fast-path plans do not instantiate")
        quota = quota or self.default_quota
        images = self.instantiation_steps(plan)
        began = clock()
        fresh = plan.target_slice not in self.registry
        instance = self.ensure_instance(plan.target_slice, edge)
        started: dict[FunctionKind, int] = {}
        fresh_starts: list[FunctionKind] = []
        try:
            for image in images:
                if image.function in worker.functions:
                    # already hosted (stale handler view); never start twice
                    started[image.function] = worker.functions[image.function].port
                    continue
                clock.advance(
                    pull_image(worker.cache, image, pull_bandwidth_bytes_per_s)
                )
                inst = worker.begin_start(image, quota)
                clock.advance(worker.start_delay_ms)
                worker.complete_start(image.function)
                started[image.function] = inst.port
                fresh_starts.append(image.function)
        except Exception:
            for fn in fresh_starts:
                worker.stop_function(fn)
            if fresh:
                del self.registry[plan.target_slice]
            raise
        self.mark_active(plan.target_slice, service_id, started)
        return instance, clock() - began

    def record_slice_functions(
        self, slice_id: str, newly_started: "set[FunctionKind] | frozenset[FunctionKind]"
    ) -> SliceInstance:
        """Step the handler view forward so identical requests fast-path."""
        instance = self.registry.get(slice_id)
        if instance is None:
            raise UnknownSliceError(slice_id)
        self._handler_view.setdefault(instance.edge_node, set()).update(newly_started)
        return instance

    def handler_view(self, edge: str) -> frozenset[FunctionKind]:
        return frozenset(self._handler_view.get(edge, set()))

    # --- teardown ---

    def forget_slice(self, slice_id: str) -> None:
        """Drop registry and handler-view entries (worker already stopped)."""
        instance = self.registry.pop(slice_id, None)
        if instance is not None:
            self._handler_view.pop(instance.edge_node, None)

    def terminate_slice(
        self,
        slice_id: str,
        *,
        worker: EdgeWorker,
        finalize: Callable[[str], int] | None = None,
    ) -> dict:
        """Stop the slice; ``finalize(edge_node)`` settles offloaded tasks
        first and returns the number of resources it synchronized."""
        instance = self.registry.get(slice_id)
        if instance is None:
            raise UnknownSliceError(slice_id)
        instance.state = SliceState.TERMINATING
        synced = finalize(instance.edge_node) if finalize is not None else 0
        for fn in list(instance.running_functions):
            if fn in worker.functions:
                worker.stop_function(fn)
        del self.registry[slice_id]
        self._handler_view.pop(instance.edge_node, None)
        return {"slice_id": slice_id, "synced_resources": synced}
