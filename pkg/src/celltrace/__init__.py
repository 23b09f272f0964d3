"""Cellular-network contact tracing toolkit.

Desk-scale implementation of a geolocation-based tracing pipeline: a
stochastic-geometry experiment comparing smartphone-only against any-phone
populations, a spatiotemporal contact join engine, a deterministic
multi-operator protocol simulator, and a registry/triage HTTP service.
"""

__version__ = "0.1.0"
