from . import io_utils, linalg_utils
