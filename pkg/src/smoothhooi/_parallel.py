"""Worker-count policy for fold/grid/replication parallelism."""

import os


def worker_count() -> int:
    """Workers to use: SMOOTHHOOI_THREADS if set, else all available cores."""
    env = os.environ.get("SMOOTHHOOI_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
