import os

FORMAT_VERSION = 'mmfs/1'

RAW = 'raw'
UNIT_NORM = 'unit_norm'
CENTERED_UNIT_NORM = 'centered_unit_norm'
NORM_MODES = (UNIT_NORM, CENTERED_UNIT_NORM)

# stored values allowed when a sparse matrix has to be densified
DENSE_LIMIT = int(os.environ.get('MMFS_DENSE_LIMIT', 5 * 10**7))
# largest Gram / MI matrix order for the dense path
GRAM_LIMIT = int(os.environ.get('MMFS_GRAM_LIMIT', 4096))

# alpha thresholds separating fallback / support / margin violator tiers
ALPHA_TOL = 1e-12
