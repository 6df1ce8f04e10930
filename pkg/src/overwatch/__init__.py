"""
Console and run-file logging under the root `qcfe` logger
"""

from .overwatch import get_overwatch
