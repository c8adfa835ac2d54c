"""Dynamic inter-UAV communication graph and one-hop-per-slot message delivery.

Adjacency uses the previous slot's 3D positions; hop distances come from
breadth-first search with unreachable pairs at infinity.  A message composed
at slot n carries the sender's current local state together with its
previous-slot policy fingerprint and belief, and is readable by one-hop
neighbors within the same slot, so information crosses exactly one edge per
slot.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CommGraph:
    neighbors: tuple[tuple[int, ...], ...]  # ascending-id neighbor lists
    hops: np.ndarray  # (J, J) float matrix, np.inf for unreachable
    radius: float

    @property
    def num_agents(self) -> int:
        return len(self.neighbors)


@dataclass(frozen=True)
class Message:
    sender: int
    slot: int
    state: np.ndarray  # raw local-state snapshot
    fingerprint: object  # previous-slot action-head probabilities (tensor)
    belief: object  # previous-slot recurrent belief (tensor)


def build_graph(positions: np.ndarray, radius: float) -> CommGraph:
    """Graph over agents whose squared 3D distance is within radius**2.

    ``positions`` holds one (x, y, z) row per agent, in meters, taken from
    the previous slot.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    diff = pos[:, None, :] - pos[None, :, :]
    dist_sq = np.sum(diff * diff, axis=2)
    adj = dist_sq <= radius * radius
    np.fill_diagonal(adj, False)
    neighbors = tuple(tuple(int(i) for i in np.flatnonzero(adj[j])) for j in range(n))
    hops = np.full((n, n), np.inf)
    for src in range(n):
        hops[src, src] = 0.0
        queue = deque([src])
        while queue:
            cur = queue.popleft()
            for nxt in neighbors[cur]:
                if np.isinf(hops[src, nxt]):
                    hops[src, nxt] = hops[src, cur] + 1.0
                    queue.append(nxt)
    return CommGraph(neighbors=neighbors, hops=hops, radius=radius)


def compose_message(
    sender: int, slot: int, state: np.ndarray, fingerprint, belief
) -> Message:
    """Broadcast payload for one slot; the same object goes to every neighbor."""
    return Message(
        sender=sender,
        slot=slot,
        state=np.array(state, dtype=float, copy=True),
        fingerprint=fingerprint,
        belief=belief,
    )


class LatencyBuffer:
    """Single-slot mailbox: posts are visible only during the slot they were
    composed for, enforcing the one-hop-per-slot rule."""

    def __init__(self) -> None:
        self._slot: int | None = None
        self._posts: dict[int, Message] = {}

    def post(self, message: Message) -> None:
        if self._slot is None:
            self._slot = message.slot
        elif message.slot != self._slot:
            raise ValueError("all posts in one delivery round must share a slot")
        self._posts[message.sender] = message

    def collect(self, graph: CommGraph, receiver: int) -> list[Message]:
        return [self._posts[i] for i in graph.neighbors[receiver] if i in self._posts]

    def tick(self) -> None:
        self._slot = None
        self._posts.clear()


def deliver(graph: CommGraph, messages: list[Message]) -> list[list[Message]]:
    """Synchronous delivery round: every agent's inbox holds exactly the
    messages of its one-hop neighbors, ordered by ascending sender id."""
    buffer = LatencyBuffer()
    for msg in messages:
        buffer.post(msg)
    inboxes = [buffer.collect(graph, j) for j in range(graph.num_agents)]
    buffer.tick()
    return inboxes
