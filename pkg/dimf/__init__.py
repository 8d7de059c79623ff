# D-IMF package initialization
from .errors import DimfError
