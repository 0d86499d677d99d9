"""Event loops.

Components never look at a clock directly; they call ``env.schedule(delay,
handler, *args)``.  :class:`EventLoop` fires handlers in simulated-time
order.  :class:`ExploreLoop` ignores delays and lets a model checker pick any
pending handler next, which is how crashlab enumerates interleavings with the
same component code.
"""

from __future__ import annotations

import heapq
from collections import deque


def _event_key(handler, args):
    owner = getattr(handler, "__self__", None)
    return (getattr(owner, "name", ""), handler.__name__, repr(args))


class EventLoop:
    explore = False

    def __init__(self):
        self.now = 0
        self._heap = []
        self._order = 0
        self.fired = 0

    def schedule(self, delay, handler, *args, internal=False):
        if delay < 0:
            raise ValueError("negative delay")
        self._order += 1
        heapq.heappush(self._heap, (self.now + int(delay), self._order, handler, args))

    def __len__(self):
        return len(self._heap)

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def step(self) -> bool:
        if not self._heap:
            return False
        t, _, handler, args = heapq.heappop(self._heap)
        self.now = t
        self.fired += 1
        handler(*args)
        return True

    def run(self, until=None, stop=None) -> int:
        """Fire events until the queue drains, time passes ``until`` or ``stop()`` is true."""
        n = 0
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                self.now = until
                break
            self.step()
            n += 1
            if stop is not None and stop():
                break
        return n

    def clear(self):
        self._heap.clear()


class ExploreLoop:
    """Untimed loop; every scheduled handler is an independently enabled action."""

    explore = True

    def __init__(self):
        self.now = 0
        self.pending: list = []
        self._immediate: deque = deque()
        self.fired = 0

    def schedule(self, delay, handler, *args, internal=False):
        if internal:
            self._immediate.append((handler, args))
        else:
            self.pending.append((handler, args))

    def __len__(self):
        return len(self.pending)

    def _drain(self):
        while self._immediate:
            handler, args = self._immediate.popleft()
            handler(*args)

    def fire(self, index: int):
        handler, args = self.pending.pop(index)
        self.fired += 1
        handler(*args)
        self._drain()
        self.canonicalize()

    def describe(self, index: int) -> str:
        handler, args = self.pending[index]
        owner, name, rargs = _event_key(handler, args)
        return f"{owner}.{name}{rargs}"

    def canonicalize(self):
        self.pending.sort(key=lambda e: _event_key(*e))

    def run_all(self, choose=None) -> int:
        """Fire pending actions (first enabled by default) until none remain."""
        self._drain()
        self.canonicalize()
        n = 0
        while self.pending:
            self.fire(0 if choose is None else choose(len(self.pending)))
            n += 1
        return n

    def clear(self):
        self.pending.clear()
        self._immediate.clear()
