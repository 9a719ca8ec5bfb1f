import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "AUTOLABEL_THREADS"


def thread_count():
    """Worker cap from ``AUTOLABEL_THREADS``; 1 when unset or invalid."""
    try:
        return max(1, int(os.environ.get(ENV_THREADS, "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    """Ordered map; runs in a thread pool when more than one worker is allowed."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
