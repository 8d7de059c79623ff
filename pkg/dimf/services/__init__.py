# Experiment runners behind the CLI, one module per mode
from . import benchmark, bridge_check, gauss_convergence, grid_convergence, oracle_check
