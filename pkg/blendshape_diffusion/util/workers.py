"""
Worker pool sized by the EMODIFF_THREADS environment variable. Results always come back
in input order so reductions stay deterministic.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
import torch
from blendshape_diffusion.shared.constants import THREADS_ENVIRONMENT_VARIABLE
from blendshape_diffusion.shared.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def worker_count():
    """Number of workers requested through EMODIFF_THREADS. Defaults to 1."""
    raw = os.environ.get(THREADS_ENVIRONMENT_VARIABLE, "1")
    try:
        count = int(raw)
    except ValueError as v_e:
        raise ConfigurationError(
            f"{THREADS_ENVIRONMENT_VARIABLE} must be a positive integer, got {raw!r}"
        ) from v_e
    if count < 1:
        raise ConfigurationError(
            f"{THREADS_ENVIRONMENT_VARIABLE} must be a positive integer, got {raw!r}"
        )
    return count


def configure_torch_threads():
    """Cap torch intra-op threads at the configured worker count"""
    count = worker_count()
    torch.set_num_threads(count)
    logger.debug("Using %d worker thread(s)", count)
    return count


def ordered_map(function, items):
    """map() over a thread pool; the output order matches the input order"""
    items = list(items)
    count = worker_count()
    if count == 1 or len(items) < 2:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=count) as pool:
        return list(pool.map(function, items))
