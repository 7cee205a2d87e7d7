import os

# keep BLAS single-threaded before numpy loads; these matrices are tiny and
# thread fan-out only adds overhead
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
