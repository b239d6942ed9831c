"""LLM Delegate Protocol: identity-aware agent-to-agent delegation.

The package is organized around the protocol's five mechanisms plus the
experiment harness:

- :mod:`ldp.wire` - signed message envelopes and transports
- :mod:`ldp.identity` - delegate identity cards and label flattening
- :mod:`ldp.payload` - payload modes, encoders, negotiation, fallback
- :mod:`ldp.session` - governed session lifecycle, budgets, caching
- :mod:`ldp.provenance` - result provenance and source weighting
- :mod:`ldp.trust` - trust domains, replay protection, policy engine
- :mod:`ldp.routing` - delegate pool and routing policies
- :mod:`ldp.delegates` - mock delegates, failure injection, serving
- :mod:`ldp.experiments` - deterministic reproduction experiments
- :mod:`ldp.figures` - figure rendering for experiment reports
"""

__version__ = "0.1.0"
