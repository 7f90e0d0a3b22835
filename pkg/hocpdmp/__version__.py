"""
hocpdmp - House-of-cards PDMP toolkit
Version information - single source of truth
"""

__version__ = "0.1.0"
__app_name__ = "hocpdmp"
__author__ = "cycleuser"
__email__ = ""
__description__ = "Simulation and numerical verification toolkit for house-of-cards PDMPs"
__url__ = "https://github.com/cycleuser/hocpdmp"
