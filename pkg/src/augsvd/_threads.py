"""BLAS thread control.

Results of BLAS calls can differ in the last bits with the number of worker
threads, so bit-for-bit reproducibility needs a fixed single thread.
"""
import contextlib
import os

from threadpoolctl import threadpool_limits

ENV_THREADS = "ASVD_THREADS"


def thread_limit():
    """Thread cap from ``ASVD_THREADS``, or ``None`` when unset."""
    raw = os.environ.get(ENV_THREADS)
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
    return value


@contextlib.contextmanager
def deterministic(enabled: bool = True):
    """Run the body with BLAS pinned to one thread (or the env cap if disabled)."""
    limit = 1 if enabled else thread_limit()
    if limit is None:
        yield
        return
    with threadpool_limits(limits=limit):
        yield
