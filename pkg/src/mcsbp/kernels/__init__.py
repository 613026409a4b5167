"""Hot numeric kernels (numba-compiled when available)."""
