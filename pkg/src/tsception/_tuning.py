"""Process-level tuning for the single-threaded training hot loop.

Two knobs, both numerics-neutral:

- glibc's default 128 KiB mmap threshold makes every multi-megabyte
  temporary an mmap/munmap round trip with page-fault zeroing; raising it
  keeps those blocks on the heap for reuse (~1.5x end to end).
- OpenBLAS worker threads spin-wait after each call and steal cycles from
  the compute thread on small machines.  Training is single-threaded by
  contract, so the pool is pinned to one thread; measured ~1.3x faster
  and it makes single-core runtime claims mean what they say.
"""

import ctypes
import glob
import os
import sysconfig

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3

_done = False


def _tune_malloc():
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
    except (OSError, AttributeError):
        pass  # non-glibc platform


def _pin_blas_single_thread():
    # backstop for any BLAS loaded later or in subprocesses
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    candidates = []
    site = sysconfig.get_paths().get("purelib", "")
    if site:
        candidates += glob.glob(os.path.join(site, "numpy.libs", "*openblas*"))
        candidates += glob.glob(os.path.join(site, "..", "dist-packages",
                                             "numpy.libs", "*openblas*"))
    candidates += ["libopenblas.so.0", "libopenblas.so"]
    symbols = ("openblas_set_num_threads", "scipy_openblas_set_num_threads64_",
               "openblas_set_num_threads64_", "goto_set_num_threads")
    for path in candidates:
        try:
            lib = ctypes.CDLL(path)
        except OSError:
            continue
        for symbol in symbols:
            fn = getattr(lib, symbol, None)
            if fn is not None:
                try:
                    fn(1)
                    return
                except (OSError, ctypes.ArgumentError):
                    continue


def tune_allocator():
    global _done
    if _done:
        return
    _done = True
    _tune_malloc()
    _pin_blas_single_thread()
