"""Storage module for reusable numerical artifacts (quadrature schemes, evaluation tensors)."""

from threading import Lock
from time import perf_counter
from typing import Any, Callable, Hashable, NamedTuple

from cachetools import LRUCache

from higgsbal.config import CACHE_SIZE, Singleton, logger


class StorageEntry(NamedTuple):
    """A storage entry that contains a cached artifact.

    Attributes:
        value (Any): The cached artifact.
        elapsed (float): Seconds spent creating the artifact.
    """

    value: Any
    elapsed: float = 0.0


class Storage(metaclass=Singleton):
    """A singleton class that caches artifacts shared by every computation of a run."""

    def __init__(self):
        self.cache: LRUCache = LRUCache(maxsize=CACHE_SIZE)
        self.lock = Lock()

    def add_entry(self, key: Hashable, entry: StorageEntry) -> None:
        """Add an entry to the storage cache.

        Arguments:
            key (Hashable): The unique key for the entry.
            entry (StorageEntry): The storage entry to be added.
        """
        logger.debug("Adding entry to storage: %s", key)
        with self.lock:
            self.cache[key] = entry

    def get_entry(self, key: Hashable) -> StorageEntry | None:
        """Retrieve an entry from the storage cache.

        Arguments:
            key (Hashable): The unique key for the entry.

        Returns:
            StorageEntry | None: The storage entry if found, otherwise None.
        """
        with self.lock:
            return self.cache.get(key)

    def get_or_create(self, key: Hashable, factory: Callable[[], Any]) -> Any:
        """Return the cached artifact for the key, creating it with the factory on a miss.

        Arguments:
            key (Hashable): The unique key for the entry.
            factory (Callable[[], Any]): Builds the artifact.

        Returns:
            Any: The cached or newly created artifact.
        """
        entry = self.get_entry(key)
        if entry is not None:
            return entry.value
        start = perf_counter()
        value = factory()
        self.add_entry(key, StorageEntry(value=value, elapsed=perf_counter() - start))
        return value

    def remove_entry(self, key: Hashable) -> None:
        """Remove an entry from the storage.

        Arguments:
            key (Hashable): The unique key for the entry.
        """
        logger.debug("Removing entry from storage: %s", key)
        with self.lock:
            self.cache.pop(key, None)

    def clear(self) -> None:
        """Drop every cached artifact."""
        with self.lock:
            self.cache.clear()
