from .jfi import compute_jfi
from .linkshim import RateLimitedLink, TokenBucket
from .origin import OriginServer
from .loadgen import LoadTestPlan, LoadTestReport, run_load_test

__all__ = ["compute_jfi", "RateLimitedLink", "TokenBucket", "OriginServer",
           "LoadTestPlan", "LoadTestReport", "run_load_test"]
