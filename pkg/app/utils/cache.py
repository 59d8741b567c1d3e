"""Solved voltage profiles, reused across candidate rollouts."""

from __future__ import annotations

import hashlib
import logging
import threading
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from app.core.powerflow import BoundarySpec, Conductor, InjectionMap, VoltageProfile

logger = logging.getLogger(__name__)


class ProfileCache:
    """In-memory profile cache with LRU eviction.

    Rollouts under the hold-constant forecast repeat the same injections for
    every step of a slot, and many candidate patterns share slot words, so
    most solves after the first are hits. Profiles are treated as read-only.
    """

    def __init__(self, max_size: int = 4096, enabled: bool = True) -> None:
        self.max_size = max_size
        self.enabled = enabled
        self.hits = 0
        self.misses = 0
        self._entries: dict[str, VoltageProfile] = {}
        self._access_order: list[str] = []
        self._lock = threading.Lock()

    @staticmethod
    def _make_key(
        conductor: Conductor,
        injections: InjectionMap,
        boundary: BoundarySpec,
        cells: int,
        tol: float,
        max_iterations: int,
    ) -> str:
        raw = "|".join(
            (
                repr(conductor),
                repr(injections.entries),
                repr(boundary),
                str(cells),
                repr(tol),
                str(max_iterations),
            )
        )
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def get(self, key: str) -> VoltageProfile | None:
        if not self.enabled:
            return None

        with self._lock:
            profile = self._entries.get(key)
            if profile is None:
                return None
            if key in self._access_order:
                self._access_order.remove(key)
            self._access_order.append(key)
            return profile

    def put(self, key: str, profile: VoltageProfile) -> None:
        if not self.enabled:
            return

        with self._lock:
            self._entries[key] = profile
            if key in self._access_order:
                self._access_order.remove(key)
            self._access_order.append(key)
            self._evict()

    def _evict(self) -> None:
        while len(self._entries) > self.max_size and self._access_order:
            oldest_key = self._access_order.pop(0)
            self._entries.pop(oldest_key, None)

    def solve(
        self,
        conductor: Conductor,
        injections: InjectionMap,
        boundary: BoundarySpec,
        cells: int = 200,
        tol: float = 1e-10,
        max_iterations: int = 50,
    ) -> VoltageProfile:
        """``solve_profile`` through the cache; failures are not cached."""
        from app.core.powerflow import solve_profile

        key = self._make_key(conductor, injections, boundary, cells, tol, max_iterations)
        cached = self.get(key)
        if cached is not None:
            with self._lock:
                self.hits += 1
            return cached

        profile = solve_profile(conductor, injections, boundary, cells, tol, max_iterations)
        with self._lock:
            self.misses += 1
        self.put(key, profile)
        return profile

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self._access_order.clear()
            self.hits = 0
            self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries
