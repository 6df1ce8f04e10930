"""
Miscellaneous utilities including the error hierarchy, directory set up, name registries, and more...
"""

from .errors import QCFEError
from .paths import create_paths
from .registry import MODEL_REGISTRY, REDUCTION_REGISTRY
