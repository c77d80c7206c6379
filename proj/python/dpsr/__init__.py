"""Dual perceptual loss super-resolution toolkit."""

import torch  # noqa: F401

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
