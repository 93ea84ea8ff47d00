"""
Operation Counters
==================
Thread-safe invocation counters for kernels and mechanisms.
"""

import threading
from contextlib import contextmanager

EVENTS = ('ntt', 'intt', 'bconv', 'modswitch', 'modup', 'moddown',
          'keymult', 'rescale', 'automorphism', 'tensor')


class Counters:
    """Named event counters guarded by a lock"""

    def __init__(self):
        self.lock = threading.Lock()
        self._counts = {name: 0 for name in EVENTS}

    def add(self, name, amount=1):
        with self.lock:
            self._counts[name] = self._counts.get(name, 0) + amount

    def get(self, name):
        with self.lock:
            return self._counts.get(name, 0)

    def snapshot(self):
        with self.lock:
            return dict(self._counts)

    def reset(self):
        with self.lock:
            for name in self._counts:
                self._counts[name] = 0

    @contextmanager
    def counting(self):
        """Yield a dict that holds the counter delta of the block once it exits"""
        before = self.snapshot()
        delta = {}
        try:
            yield delta
        finally:
            after = self.snapshot()
            delta.update({name: after.get(name, 0) - before.get(name, 0) for name in after})


counters = Counters()
