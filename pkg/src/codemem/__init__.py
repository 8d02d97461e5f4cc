"""CodeMem: an agent orchestration runtime with procedural memory.

An LLM driver discovers tools just-in-time from a searchable registry,
executes generated scripts in a sandbox that talks back over an
authenticated RPC bridge, anchors long plans in an external todo store,
and freezes validated logic into a versioned skill bank for deterministic,
driver-free reuse.
"""

__version__ = "0.1.0"
