# Pydantic documents read from and written to disk
from . import config, summary
