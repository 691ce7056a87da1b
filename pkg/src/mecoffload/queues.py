"""Physical and virtual queues, their slot recursions and clip-based failure."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


def step_local_queue(q_local, n_up, arrivals):
    return np.maximum(0, np.asarray(q_local) - n_up) + arrivals


def step_server_queue(q_server, n_comp, q_local, n_up):
    return np.maximum(0, np.asarray(q_server) - n_comp) + np.minimum(q_local, n_up)


def step_virtual_queue(z, q_total_next, q_avg):
    return np.maximum(0.0, np.asarray(z, dtype=float) + q_total_next - q_avg)


@dataclass(frozen=True)
class QueueSet:
    local: np.ndarray  # Q^l, units (int)
    server: np.ndarray  # Q^s, units (int)
    virtual: np.ndarray  # Z, real
    q_avg: np.ndarray  # target backlog per UE
    eps_queue: float = 10.0
    eps_virtual: float = 0.0

    @classmethod
    def empty(cls, n_ues: int, q_avg, eps_queue=10.0, eps_virtual=0.0) -> "QueueSet":
        return cls(np.zeros(n_ues, dtype=np.int64), np.zeros(n_ues, dtype=np.int64),
                   np.zeros(n_ues), np.broadcast_to(np.asarray(q_avg, float), (n_ues,)).copy(),
                   eps_queue, eps_virtual)

    @property
    def total(self) -> np.ndarray:
        return self.local + self.server

    @property
    def q_clip(self) -> np.ndarray:
        return (1.0 + self.eps_queue) * self.q_avg

    @property
    def z_clip(self) -> np.ndarray:
        # Squared backlog, as written; not dimensionally homogeneous with Z.
        return (1.0 + self.eps_virtual) * self.q_avg ** 2

    def advance(self, n_up, n_comp, arrivals, q_avg_next) -> "QueueSet":
        """One slot of all three recursions; Z uses the post-update total backlog."""
        local = step_local_queue(self.local, n_up, arrivals).astype(np.int64)
        server = step_server_queue(self.server, n_comp, self.local, n_up).astype(np.int64)
        q_avg_next = np.broadcast_to(np.asarray(q_avg_next, float), self.q_avg.shape).copy()
        z = step_virtual_queue(self.virtual, local + server, q_avg_next)
        return replace(self, local=local, server=server, virtual=z, q_avg=q_avg_next)

    def permuted(self, perm) -> "QueueSet":
        perm = list(perm)
        return replace(self, local=self.local[perm], server=self.server[perm],
                       virtual=self.virtual[perm], q_avg=self.q_avg[perm])


def check_failure(queues: QueueSet) -> bool:
    """True once any backlog or virtual queue strictly exceeds its clip value."""
    return bool((queues.total > queues.q_clip).any() or (queues.virtual > queues.z_clip).any())
