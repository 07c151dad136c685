# -*- coding: utf-8 -*-
"""Actor threads for batch prefetching and directory enhancement."""

import logging

import pykka

from jcrnet import imageio
from jcrnet import model
from jcrnet import trainer

logger = logging.getLogger(__name__)


class PatchSampler(pykka.ThreadingActor):
    def __init__(self, pairs, spec, seed):
        super().__init__()
        self._pairs = pairs
        self._spec = spec
        self._seed = seed

    def on_start(self):
        logger.debug("Starting patch sampler for seed %s", self._seed)

    def batch(self, step):
        return trainer.sample_patches(
            self._pairs, self._spec, trainer.step_rng(self._seed, step)
        )


class BatchQueue:
    """Keeps up to ``depth`` future batches in flight. Batches are keyed
    by step, so they come back in the seeded order whatever the timing."""

    def __init__(self, pairs, spec, seed, first_step, last_step, depth):
        self._actor = PatchSampler.start(pairs, spec, seed)
        self._proxy = self._actor.proxy()
        self._last_step = last_step
        self._depth = depth
        self._pending = {}
        self._next = first_step
        self._fill()

    def _fill(self):
        while len(self._pending) < self._depth and self._next < self._last_step:
            self._pending[self._next] = self._proxy.batch(self._next)
            self._next += 1

    def get(self, step):
        future = self._pending.pop(step, None)
        if future is None:
            future = self._proxy.batch(step)
        batch = future.get()
        self._fill()
        return batch

    def stop(self):
        self._pending.clear()
        self._actor.stop()


class EnhanceWorker(pykka.ThreadingActor):
    def __init__(self, params, cfg):
        super().__init__()
        self._params = params
        self._cfg = cfg

    def enhance_file(self, source, target):
        image = imageio.load_image(source)
        pixels = model.enhance_array(image.pixels, self._params, self._cfg)
        imageio.save_image(imageio.ImageBuffer(pixels), target)
        logger.debug("Enhanced %s into %s", source, target)
        return target


def enhance_files(jobs, params, cfg, threads=1):
    """Enhance ``(source, target)`` jobs on ``threads`` actors.

    Results come back in job order; the first failure is re-raised.
    """
    if threads <= 1 or len(jobs) <= 1:
        worker = EnhanceWorker(params, cfg)
        return [worker.enhance_file(source, target) for source, target in jobs]

    refs = [EnhanceWorker.start(params, cfg) for _ in range(min(threads, len(jobs)))]
    try:
        proxies = [ref.proxy() for ref in refs]
        futures = [
            proxies[index % len(proxies)].enhance_file(source, target)
            for index, (source, target) in enumerate(jobs)
        ]
        return pykka.get_all(futures)
    finally:
        for ref in refs:
            ref.stop()
