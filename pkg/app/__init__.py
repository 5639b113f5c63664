"""
Adaptive traffic-signal engine
Camera pipeline, NSGA-II signal optimizer and intersection simulator
"""

__version__ = "1.0.0"
