"""marnet: a deterministic two-agent coordination simulator.

Compares three communication paradigms over the same worlds and seeds:
classical raw broadcast, semantic change-triggered tokens, and
reasoning-gated messaging in which a sender predicts the receiver's
belief update and action before deciding whether to transmit at all.
"""

__version__ = "0.1.0"
