"""Signal handling for graceful interruption.

This module lets a long training run stop after the current step on
SIGINT (Ctrl+C) and SIGTERM, restoring the previous handlers afterwards.
"""

import logging
import signal
from typing import Callable, Dict, Optional


class SignalHandler:
    """Turns SIGINT and SIGTERM into a stop request for a running loop."""

    SIGNALS = (signal.SIGINT, signal.SIGTERM)

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.shutdown_callback: Optional[Callable] = None
        self._previous: Dict[int, object] = {}

    def register(self, callback: Callable):
        """Install the handlers; ``callback`` runs once per received signal."""
        self.shutdown_callback = callback
        for signum in self.SIGNALS:
            try:
                self._previous[signum] = signal.signal(signum, self._handle_signal)
            except ValueError:
                # not in the main thread; run without interruption support
                self.logger.debug(f"Cannot install handler for signal {signum}")

    def restore(self):
        """Put back the handlers that were active before ``register``."""
        for signum, handler in self._previous.items():
            signal.signal(signum, handler)
        self._previous.clear()

    def _handle_signal(self, signum: int, frame):
        self.logger.info(f"Received signal {signum}, stopping after the current step...")
        if self.shutdown_callback:
            self.shutdown_callback()
