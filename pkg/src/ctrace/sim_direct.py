"""Vertex-level simulator of the contact-tracing process.

Vertices are identified by their genealogical path ``(x_1, ..., x_n)``.
Offspring counts, detection and tracing indicators are functions of
per-vertex uniforms derived from a hash of the path, so two runs sharing a
root key but using different ``(p, alpha)`` are monotonically coupled.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .analytics import CtpParams
from .rng import SALT_DETECT, SALT_OFFSPRING, SALT_TRACE, child_key, key_uniform
from .trajectory import Trajectory

DEFAULT_CAP = 10_000_000


class ExplosionCap(RuntimeError):
    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(slots=True)
class Vertex:
    id: tuple
    key: int
    generation: int
    traceable: bool
    cluster_id: tuple
    detected: bool | None = None

    @property
    def parent(self) -> tuple | None:
        return self.id[:-1] if self.id else None


@dataclass
class GenealogyState:
    current_time: int
    alive: dict  # id -> Vertex; this is the set A_n
    live_by_generation: dict  # generation -> set of ids
    cluster_members: dict  # cluster_id -> set of ids
    untreated: list | None  # keys of the current generation of the full family tree
    root_key: int

    @property
    def pending_detection_generation(self) -> int:
        return self.current_time

    def current_generation(self) -> set:
        return self.live_by_generation.get(self.current_time, set())

    def zct(self) -> int:
        return len(self.current_generation())

    def seeds(self) -> int:
        return sum(1 for x in self.current_generation() if not self.alive[x].traceable)

    def z(self) -> int | None:
        return None if self.untreated is None else len(self.untreated)


def _offspring(params: CtpParams, key: int) -> int:
    return params.dist.inverse_cdf(key_uniform(key, SALT_OFFSPRING))


def _add(state: GenealogyState, v: Vertex) -> None:
    state.alive[v.id] = v
    state.live_by_generation.setdefault(v.generation, set()).add(v.id)
    state.cluster_members.setdefault(v.cluster_id, set()).add(v.id)


def _detected(params: CtpParams, v: Vertex) -> bool:
    if v.detected is None:
        v.detected = key_uniform(v.key, SALT_DETECT) < params.p
    return v.detected


def _remove_clusters(state: GenealogyState, cluster_ids) -> None:
    for cid in cluster_ids:
        for vid in state.cluster_members.pop(cid, ()):
            v = state.alive.pop(vid)
            gen = state.live_by_generation[v.generation]
            gen.discard(vid)
            if not gen:
                del state.live_by_generation[v.generation]


def init(params: CtpParams, rng: np.random.Generator | None = None, key: int | None = None,
         track_untreated: bool = True) -> GenealogyState:
    if key is None:
        rng = rng if rng is not None else np.random.default_rng()
        key = int(rng.integers(0, 2**63))
    state = GenealogyState(0, {}, {}, {}, [key] if track_untreated else None, key)
    root = Vertex((), key, 0, False, ())
    _add(state, root)
    if params.b == 0 and _detected(params, root):
        _remove_clusters(state, [root.cluster_id])
    return state


def step(state: GenealogyState, params: CtpParams, cap: int = DEFAULT_CAP) -> GenealogyState:
    """Advance from time ``n - 1`` to ``n`` in place and return the state."""
    n = state.current_time + 1
    parents = [state.alive[x] for x in state.live_by_generation.get(n - 1, ())]
    for par in parents:
        for i in range(1, _offspring(params, par.key) + 1):
            ck = child_key(par.key, i)
            traceable = key_uniform(ck, SALT_TRACE) < params.alpha
            cid = par.cluster_id if traceable else par.id + (i,)
            _add(state, Vertex(par.id + (i,), ck, n, traceable, cid))
    if state.untreated is not None:
        nxt = []
        for k in state.untreated:
            nxt.extend(child_key(k, i) for i in range(1, _offspring(params, k) + 1))
            if len(nxt) > cap:
                break
        state.untreated = nxt
    state.current_time = n

    check_gen = n - params.b
    hit = {state.alive[x].cluster_id for x in state.live_by_generation.get(check_gen, ())
           if _detected(params, state.alive[x])}
    _remove_clusters(state, hit)

    size = len(state.alive) + (len(state.untreated) if state.untreated is not None else 0)
    if size > cap:
        raise ExplosionCap(f"population {size} exceeds cap {cap} at generation {n}", None)
    return state


def run(params: CtpParams, horizon: int, rng: np.random.Generator | None = None, *,
        key: int | None = None, cap: int = DEFAULT_CAP, track_untreated: bool = True) -> Trajectory:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    state = init(params, rng, key, track_untreated)
    traj = Trajectory(Z=[] if track_untreated else None)

    def record():
        traj.ZCT.append(state.zct())
        traj.R0.append(state.seeds())
        traj.weight.append(1.0)
        if traj.Z is not None:
            traj.Z.append(state.z())

    record()
    for _ in range(horizon):
        try:
            step(state, params, cap)
        except ExplosionCap as exc:
            exc.trajectory = traj
            raise
        record()
    return traj


def clusters_by_search(state: GenealogyState) -> dict:
    """Traceable components of the alive set by breadth-first search over parent links."""
    adj = defaultdict(set)
    for vid, v in state.alive.items():
        if v.traceable and v.parent in state.alive:
            adj[vid].add(v.parent)
            adj[v.parent].add(vid)
    seen, comps = set(), {}
    for vid in state.alive:
        if vid in seen:
            continue
        comp, todo = set(), [vid]
        while todo:
            x = todo.pop()
            if x in comp:
                continue
            comp.add(x)
            todo.extend(adj[x] - comp)
        seen |= comp
        comps[min(comp, key=len)] = comp
    return comps
