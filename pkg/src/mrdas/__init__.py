"""Uplink multiuser detection simulator for distributed-antenna cellular layouts."""

__version__ = "0.1.0"
