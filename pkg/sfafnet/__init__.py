"""
sfafnet - gated spatial-frequency fusion network for image deblurring,
on a small numpy autodiff engine
"""

__version__ = "0.1.0"
__author__ = "sfafnet"
