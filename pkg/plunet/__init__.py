import os

# PLUNET_THREADS=0 must pin BLAS to one thread before numpy is first imported
if os.environ.get("PLUNET_THREADS", "").strip() == "0":
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(_var, "1")
