"""Uplink resource allocation for spatially correlated Gaussian sources.

Modules follow the allocation pipeline: ``geometry`` and ``source_stats``
describe the network and the sources, ``rd_region`` the achievable
distortions, ``icon`` the inter-cell interference coordination, ``grouping``
and ``scheduling`` the per-cell decisions, and ``simulator`` ties them
together frame by frame.
"""

__version__ = "0.1.0"
