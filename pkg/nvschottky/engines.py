"""Engines that evaluate the independent points of a sweep"""
import os
from concurrent.futures import ThreadPoolExecutor, as_completed

import entrypoints

from .exceptions import NVSchottkyException
from .log import logger

ENGINE_ENV = 'NVSCHOTTKY_ENGINE'
DEFAULT_ENGINE = 'threads'


class SweepEngines:
    """
    The holder which houses any engine registered with the system.

    This object is used in a singleton manner to save and load particular
    named Engine objects so they may be referenced externally.
    """

    def __init__(self):
        self._engines = {}

    def register(self, name, engine):
        """Register a named engine"""
        self._engines[name] = engine

    def register_entry_points(self):
        """Register entrypoints for an engine

        Load handlers provided by other packages
        """
        for entrypoint in entrypoints.get_group_all("nvschottky.engine"):
            self.register(entrypoint.name, entrypoint.load())

    def get_engine(self, name=None):
        """Retrieves an engine by name; ``None`` picks ``$NVSCHOTTKY_ENGINE`` or the default."""
        if name is None:
            name = os.environ.get(ENGINE_ENV, DEFAULT_ENGINE)
        engine = self._engines.get(name)
        if not engine:
            raise NVSchottkyException(f"No engine named '{name}' found")
        return engine

    def names(self):
        return sorted(self._engines)


class Engine:
    """
    Base class for engines.

    Subclasses implement `evaluate_all`; `map` wraps it with progress reporting and keeps the
    results in the order of the control values whatever order they complete in.
    """

    @classmethod
    def map(cls, func, values, progress_bar=True, workers=None, desc='Sweep'):
        values = list(values)
        pbar = None
        if progress_bar and values:
            from tqdm.auto import tqdm

            if isinstance(progress_bar, dict):
                options = {"unit": "point", "desc": desc}
                options.update(progress_bar)
                pbar = tqdm(total=len(values), **options)
            else:
                pbar = tqdm(total=len(values), unit="point", desc=desc)

        def tick(result):
            if pbar is not None:
                pbar.update(1)
            return result

        try:
            results = cls.evaluate_all(func, values, tick, workers=workers)
        finally:
            if pbar is not None:
                pbar.close()
        return [results[i] for i in range(len(values))]

    @classmethod
    def evaluate_all(cls, func, values, tick, workers=None):
        """Return ``{index: func(values[index])}``; implemented by subclasses."""
        raise NotImplementedError("'evaluate_all' is not implemented for this engine")


class SerialEngine(Engine):
    """Evaluates points one after the other in the calling thread."""

    @classmethod
    def evaluate_all(cls, func, values, tick, workers=None):
        return {i: tick(func(value)) for i, value in enumerate(values)}


class ThreadEngine(Engine):
    """Evaluates points on a bounded thread pool."""

    @classmethod
    def evaluate_all(cls, func, values, tick, workers=None):
        workers = workers or min(len(values), os.cpu_count() or 1) or 1
        logger.debug(f"Evaluating {len(values)} points on {workers} threads")
        results = {}
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(func, value): i for i, value in enumerate(values)}
            for future in as_completed(futures):
                results[futures[future]] = tick(future.result())
        return results


def run_sweep(func, values, engine_name=None, progress_bar=False, workers=None, desc='Sweep'):
    """Evaluate ``func`` at every value with the named engine; results follow ``values``."""
    return sweep_engines.get_engine(engine_name).map(
        func, values, progress_bar=progress_bar, workers=workers, desc=desc
    )


# Instantiate a SweepEngines instance, register Handlers and entrypoints
sweep_engines = SweepEngines()
sweep_engines.register('serial', SerialEngine)
sweep_engines.register('threads', ThreadEngine)
sweep_engines.register_entry_points()
