"""Process-level tuning for the small-matrix training workload.

On this workload BLAS worker threads and glibc's eager munmap of large
blocks both cost more than they save; pinning one BLAS thread and raising
the malloc mmap/trim thresholds roughly halves step time. One-thread BLAS
also keeps GEMM reduction order fixed, which the determinism guarantees
rely on.
"""

from __future__ import annotations

import ctypes
import ctypes.util

_TUNED = False

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3


def tune_runtime() -> None:
    """Idempotent; call before any heavy training/evaluation loop."""
    global _TUNED
    if _TUNED:
        return
    _TUNED = True
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1, user_api="blas")
    except Exception:
        pass
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, 128 * 1024 * 1024)
        libc.mallopt(_M_TRIM_THRESHOLD, 128 * 1024 * 1024)
    except Exception:
        pass
