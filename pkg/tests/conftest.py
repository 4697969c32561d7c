import os

# Pin BLAS pools before numpy loads anywhere: acceptance runs compare outputs
# bitwise and single-threaded kernels keep reductions sequential.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
):
    os.environ.setdefault(_var, "1")
