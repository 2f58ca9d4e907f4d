from __future__ import annotations

import os
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass

import psutil


@dataclass
class Settings:
    threads: int  # 0 is the single-threaded, bit-reproducible mode
    debug: bool

    @classmethod
    def from_env(cls) -> Settings:
        raw = os.environ.get("PLUNET_THREADS", "").strip()
        if raw:
            threads = max(int(raw), 0)
        else:
            threads = psutil.cpu_count(logical=False) or 1

        return cls(threads=threads, debug=os.environ.get("PLUNET_DEBUG", "") not in ("", "0"))

    @property
    def deterministic(self) -> bool:
        return self.threads <= 1


SETTINGS = Settings.from_env()


@contextmanager
def configured(*, threads: int | None = None, debug: bool | None = None) -> Iterator[Settings]:
    """Temporarily override engine settings."""
    previous = Settings(SETTINGS.threads, SETTINGS.debug)
    if threads is not None:
        SETTINGS.threads = threads
    if debug is not None:
        SETTINGS.debug = debug

    try:
        yield SETTINGS

    finally:
        SETTINGS.threads, SETTINGS.debug = previous.threads, previous.debug
