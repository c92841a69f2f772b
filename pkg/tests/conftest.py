"""Shared test setup: pin BLAS to one thread (the matrices here are small
enough that extra threads only add contention on CI-sized machines)."""

import threadpoolctl

threadpoolctl.threadpool_limits(1)
