"""Dual-radio WBAN toolkit: analytic MAC models, a discrete-event simulator of
the cooperative forwarding protocol, and MAC-parameter optimizers."""

__version__ = "0.1.0"
