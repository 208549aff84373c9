import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def _env_number(name: str, default, cast=float):
    """Read a numeric environment variable, keeping the default when it doesn't parse"""
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError):
        logger.warning(f"Invalid {name} value {raw!r}; using default {default}")
        return default


# Solver Configuration
ADMM_MU = _env_number('MUA_MU', 0.01)
ADMM_TOL = _env_number('MUA_TOL', 1e-6)
ADMM_MAX_ITERS = _env_number('MUA_MAX_ITERS', 1000, int)
FACTOR_CACHE_SIZE = _env_number('MUA_FACTOR_CACHE_SIZE', 16, int)
# Residual balancing: every ADMM_ADAPT_EVERY iterations mu is doubled or halved
# when one residual exceeds the other by ADMM_ADAPT_RATIO
ADMM_ADAPTIVE_MU = os.getenv('MUA_ADAPTIVE_MU', '0').strip().lower() in ('1', 'true', 'yes')
ADMM_ADAPT_EVERY = 10
ADMM_ADAPT_RATIO = 10.0

# Segmentation Configuration
SLIC_ITERS = _env_number('MUA_SLIC_ITERS', 10, int)
KMEANS_ITERS = _env_number('MUA_KMEANS_ITERS', 20, int)

# Bench Configuration
BENCH_WORKERS = _env_number('MUA_BENCH_WORKERS', 4, int)

# Logging Configuration
LOG_LEVEL = os.getenv('MUA_LOG_LEVEL', 'INFO').upper()
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


# Regularization parameters found by grid search on DC1/DC2.
# region_size is sqrt(N/K); sunsal presets only carry lambda_.
PRESETS = {
    'dc1-20db-sunsal': {'method': 'sunsal', 'lambda_': 0.7},
    'dc1-20db-kmeans': {'method': 'mua', 'transform': 'kmeans', 'lambda_c': 0.005, 'lambda_': 0.5, 'beta': 30.0, 'region_size': 13},
    'dc1-20db-slic': {'method': 'mua', 'transform': 'slic', 'lambda_c': 0.03, 'lambda_': 0.1, 'beta': 30.0, 'region_size': 6},
    'dc1-30db-sunsal': {'method': 'sunsal', 'lambda_': 0.1},
    'dc1-30db-kmeans': {'method': 'mua', 'transform': 'kmeans', 'lambda_c': 0.005, 'lambda_': 0.05, 'beta': 10.0, 'region_size': 7},
    'dc1-30db-slic': {'method': 'mua', 'transform': 'slic', 'lambda_c': 0.007, 'lambda_': 0.05, 'beta': 10.0, 'region_size': 5},
    'dc2-20db-sunsal': {'method': 'sunsal', 'lambda_': 0.1},
    'dc2-20db-kmeans': {'method': 'mua', 'transform': 'kmeans', 'lambda_c': 0.005, 'lambda_': 0.5, 'beta': 10.0, 'region_size': 11},
    'dc2-20db-slic': {'method': 'mua', 'transform': 'slic', 'lambda_c': 0.007, 'lambda_': 0.1, 'beta': 10.0, 'region_size': 8},
    'dc2-30db-sunsal': {'method': 'sunsal', 'lambda_': 0.01},
    'dc2-30db-kmeans': {'method': 'mua', 'transform': 'kmeans', 'lambda_c': 0.005, 'lambda_': 0.01, 'beta': 1.0, 'region_size': 8},
    'dc2-30db-slic': {'method': 'mua', 'transform': 'slic', 'lambda_c': 0.003, 'lambda_': 0.03, 'beta': 3.0, 'region_size': 7},
    'cuprite-slic': {'method': 'mua', 'transform': 'slic', 'lambda_c': 0.001, 'lambda_': 0.001, 'beta': 3.0, 'region_size': 5},
}
