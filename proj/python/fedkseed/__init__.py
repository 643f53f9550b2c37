"""Federated zeroth-order tuning with a finite pool of random seeds."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
