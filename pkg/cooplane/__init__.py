"""
Cooplane - cooperation-aware lane changes for a simulated ego vehicle

Builds lane-change candidates from trapezoidal acceleration profiles, predicts how surrounding
traffic reacts to each of them, picks the cheapest one and tracks it with a receding-horizon MPC
whose collision constraints are smooth dual reformulations of rectangle separation.
"""

__version__ = "0.1.0"
