"""Surface simplification by quadric-error edge collapse.

Each vertex accumulates the squared-plane-distance quadric of its incident
faces (area weighted, plus boundary constraint planes). Edges are collapsed
cheapest-first; the new vertex is placed at whichever of {endpoint a,
endpoint b, midpoint} has the lowest quadric error and does not flip any
surviving face. Edges whose endpoints carry more than one UV assignment
(texture seams) are frozen so the atlas stays well defined.
"""

from __future__ import annotations

import heapq
import warnings

import numpy as np

from .mesh_io import MeshError, TexturedMesh
from .utils import round_half_up

_BOUNDARY_WEIGHT = 100.0


def simplify_surface(mesh: TexturedMesh, rate: float) -> TexturedMesh:
    """Collapse edges until the face count reaches max(1, round(rate * faces)).

    A collapse of an interior edge removes two faces, so for targets that
    are unreachable by parity the result may land one face below the
    target. If seam freezing or flip rejection exhausts the candidate
    edges early, the best-effort result is returned with a warning.
    """
    if not 0.0 < rate <= 1.0:
        raise MeshError(f"simplification rate must be in (0, 1], got {rate}")
    if mesh.n_faces < 4:
        raise MeshError(f"mesh has {mesh.n_faces} faces; need at least 4 to simplify")

    target = int(round_half_up(rate * mesh.n_faces))
    target = max(1, target)
    if target >= mesh.n_faces:
        return mesh.copy()

    state = _CollapseState(mesh)
    deferred: list[tuple[float, int, int]] = []

    while state.n_faces > target:
        item = state.pop_edge()
        if item is None:
            # retry edges that were skipped only because they overshot
            retried = False
            for cost, u, v in sorted(deferred):
                if state.try_collapse(u, v, allow_overshoot=True, target=target):
                    retried = True
                    break
            deferred.clear()
            if retried and state.n_faces > target:
                continue
            break
        cost, u, v = item
        dead = state.edge_face_count(u, v)
        if state.n_faces - dead < target:
            deferred.append((cost, u, v))
            continue
        state.try_collapse(u, v)

    if state.n_faces > target:
        warnings.warn(
            f"simplification stopped at {state.n_faces} faces "
            f"(target {target}): no collapsible edges left",
            stacklevel=2,
        )
    return state.extract(mesh)


class _CollapseState:
    def __init__(self, mesh: TexturedMesh):
        self.pos = mesh.positions.copy()
        self.faces = mesh.faces[:, :, 0].copy()          # (F, 3) position indices
        self.face_uvs = mesh.faces[:, :, 1].copy()       # (F, 3) uv indices
        self.uvs = list(map(tuple, mesh.uvs))
        self.face_alive = np.ones(len(self.faces), dtype=bool)
        self.n_faces = len(self.faces)

        nv = len(self.pos)
        self.vertex_faces: list[set[int]] = [set() for _ in range(nv)]
        self.vertex_uv: list[set[int]] = [set() for _ in range(nv)]
        for fi, (corners, uvids) in enumerate(zip(self.faces, self.face_uvs)):
            for c, t in zip(corners, uvids):
                self.vertex_faces[c].add(fi)
                self.vertex_uv[c].add(int(t))

        self.quadrics = np.zeros((nv, 4, 4))
        edge_count: dict[tuple[int, int], int] = {}
        for fi, corners in enumerate(self.faces):
            k = _face_quadric(self.pos, corners)
            if k is None:
                continue
            for c in corners:
                self.quadrics[c] += k
            for a, b in ((0, 1), (1, 2), (2, 0)):
                e = _edge(corners[a], corners[b])
                edge_count[e] = edge_count.get(e, 0) + 1

        # boundary edges get a constraint plane so open shells keep their rim
        for (a, b), count in edge_count.items():
            if count == 1:
                self._add_boundary_quadric(a, b)

        self.version = np.zeros(nv, dtype=np.int64)
        self.heap: list[tuple[float, int, int, int, int]] = []
        for a, b in edge_count:
            self._push_edge(a, b)

    # -- quadric bookkeeping -------------------------------------------------

    def _add_boundary_quadric(self, a: int, b: int) -> None:
        shared = self.vertex_faces[a] & self.vertex_faces[b]
        if not shared:
            return
        fi = next(iter(shared))
        n = _face_normal(self.pos, self.faces[fi])
        if n is None:
            return
        edge_dir = self.pos[b] - self.pos[a]
        length = np.linalg.norm(edge_dir)
        if length <= 0:
            return
        cn = np.cross(edge_dir / length, n)
        norm = np.linalg.norm(cn)
        if norm <= 0:
            return
        cn /= norm
        d = -float(cn @ self.pos[a])
        plane = np.append(cn, d)
        k = _BOUNDARY_WEIGHT * length * length * np.outer(plane, plane)
        self.quadrics[a] += k
        self.quadrics[b] += k

    def _edge_cost(self, a: int, b: int) -> tuple[float, np.ndarray]:
        q = self.quadrics[a] + self.quadrics[b]
        best_cost, best_p = np.inf, self.pos[a]
        for p in (self.pos[a], self.pos[b], 0.5 * (self.pos[a] + self.pos[b])):
            ph = np.append(p, 1.0)
            c = max(0.0, float(ph @ q @ ph))
            if c < best_cost:
                best_cost, best_p = c, p
        return best_cost, best_p

    def _push_edge(self, a: int, b: int) -> None:
        a, b = _edge(a, b)
        cost, _ = self._edge_cost(a, b)
        heapq.heappush(self.heap, (cost, a, b, int(self.version[a]), int(self.version[b])))

    def pop_edge(self):
        while self.heap:
            cost, a, b, va, vb = heapq.heappop(self.heap)
            if self.version[a] != va or self.version[b] != vb:
                continue
            if not (self.vertex_faces[a] & self.vertex_faces[b]):
                continue  # no longer an edge
            return cost, a, b
        return None

    # -- collapse ------------------------------------------------------------

    def edge_face_count(self, a: int, b: int) -> int:
        return len(self.vertex_faces[a] & self.vertex_faces[b])

    def try_collapse(self, u: int, v: int, allow_overshoot: bool = False,
                     target: int | None = None) -> bool:
        if len(self.vertex_uv[u]) > 1 or len(self.vertex_uv[v]) > 1:
            return False  # frozen seam edge
        dying = self.vertex_faces[u] & self.vertex_faces[v]
        if not dying:
            return False
        if allow_overshoot and target is not None:
            if self.n_faces - len(dying) < target - 1:
                return False
        # link condition: u and v may share only the vertices of the dying faces
        ring_u = self._neighbor_vertices(u)
        ring_v = self._neighbor_vertices(v)
        shared_ring = ring_u & ring_v - {u, v}
        allowed = set()
        for fi in dying:
            allowed.update(int(c) for c in self.faces[fi])
        if shared_ring - allowed:
            return False

        placement = self._placement_passing_flip_check(u, v, dying)
        if placement is None:
            return False
        new_pos, new_uv = placement

        # merge uv: give the merged vertex a fresh uv slot so nothing shared
        # with other vertices is mutated
        self.uvs.append(tuple(new_uv))
        new_uv_idx = len(self.uvs) - 1

        self.pos[u] = new_pos
        self.quadrics[u] += self.quadrics[v]

        for fi in dying:
            self.face_alive[fi] = False
            self.n_faces -= 1
            for c in self.faces[fi]:
                self.vertex_faces[int(c)].discard(fi)

        moving = [fi for fi in self.vertex_faces[v] if self.face_alive[fi]]
        for fi in list(self.vertex_faces[u]) + moving:
            if not self.face_alive[fi]:
                continue
            corners = self.faces[fi]
            for ci in range(3):
                if corners[ci] in (u, v):
                    corners[ci] = u
                    self.face_uvs[fi][ci] = new_uv_idx
            self.vertex_faces[u].add(fi)
        self.vertex_faces[v] = set()
        self.vertex_uv[u] = {new_uv_idx}
        self.vertex_uv[v] = set()

        self.version[u] += 1
        self.version[v] += 1
        for n in self._neighbor_vertices(u):
            if n != u:
                self._push_edge(u, n)
        return True

    def _neighbor_vertices(self, v: int) -> set[int]:
        out = set()
        for fi in self.vertex_faces[v]:
            if self.face_alive[fi]:
                out.update(int(c) for c in self.faces[fi])
        out.discard(v)
        return out

    def _placement_passing_flip_check(self, u: int, v: int, dying: set[int]):
        uv_u = np.asarray(self.uvs[next(iter(self.vertex_uv[u]))])
        uv_v = np.asarray(self.uvs[next(iter(self.vertex_uv[v]))])
        q = self.quadrics[u] + self.quadrics[v]
        candidates = [
            (self.pos[u].copy(), uv_u),
            (self.pos[v].copy(), uv_v),
            (0.5 * (self.pos[u] + self.pos[v]), 0.5 * (uv_u + uv_v)),
        ]
        costs = []
        for p, t in candidates:
            ph = np.append(p, 1.0)
            costs.append(max(0.0, float(ph @ q @ ph)))
        for _, (p, t) in sorted(zip(costs, candidates), key=lambda x: x[0]):
            if self._flip_free(u, v, dying, p):
                return p, t
        return None

    def _flip_free(self, u: int, v: int, dying: set[int], new_pos: np.ndarray) -> bool:
        affected = (self.vertex_faces[u] | self.vertex_faces[v]) - dying
        for fi in affected:
            if not self.face_alive[fi]:
                continue
            corners = self.faces[fi]
            before = _face_normal(self.pos, corners)
            after_pts = [
                new_pos if int(c) in (u, v) else self.pos[int(c)] for c in corners
            ]
            after = np.cross(after_pts[1] - after_pts[0], after_pts[2] - after_pts[0])
            an = np.linalg.norm(after)
            if before is None or an <= 1e-30:
                return False
            if float(before @ (after / an)) <= 0.0:
                return False
        return True

    # -- output --------------------------------------------------------------

    def extract(self, source: TexturedMesh) -> TexturedMesh:
        live = np.flatnonzero(self.face_alive)
        faces = self.faces[live]
        face_uvs = self.face_uvs[live]

        used_v = np.unique(faces)
        used_t = np.unique(face_uvs)
        vmap = {int(old): i for i, old in enumerate(used_v)}
        tmap = {int(old): i for i, old in enumerate(used_t)}

        new_faces = np.empty((len(live), 3, 2), dtype=np.int64)
        for i in range(len(live)):
            for c in range(3):
                new_faces[i, c, 0] = vmap[int(faces[i, c])]
                new_faces[i, c, 1] = tmap[int(face_uvs[i, c])]

        uv_arr = np.asarray([self.uvs[int(t)] for t in used_t], dtype=np.float64)
        uv_arr = np.clip(uv_arr, 0.0, 1.0)
        return TexturedMesh(
            self.pos[used_v],
            uv_arr.reshape(-1, 2),
            new_faces,
            source.texture.copy(),
            name=source.name,
        )


def _edge(a, b) -> tuple[int, int]:
    a, b = int(a), int(b)
    return (a, b) if a < b else (b, a)


def _face_normal(pos: np.ndarray, corners) -> np.ndarray | None:
    n = np.cross(pos[corners[1]] - pos[corners[0]], pos[corners[2]] - pos[corners[0]])
    norm = np.linalg.norm(n)
    if norm <= 1e-30:
        return None
    return n / norm


def _face_quadric(pos: np.ndarray, corners) -> np.ndarray | None:
    e1 = pos[corners[1]] - pos[corners[0]]
    e2 = pos[corners[2]] - pos[corners[0]]
    n = np.cross(e1, e2)
    norm = np.linalg.norm(n)
    if norm <= 1e-30:
        return None
    area = 0.5 * norm
    n = n / norm
    d = -float(n @ pos[corners[0]])
    plane = np.append(n, d)
    return area * np.outer(plane, plane)
