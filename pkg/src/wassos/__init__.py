"""SOS/SDP bounds for Wasserstein distributionally robust expectations."""

__version__ = "0.1.0"
