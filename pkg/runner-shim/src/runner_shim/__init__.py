"""Execution-side stage harness.

Invoked inside the sandbox, this package imports a generated stage module,
calls its contract entrypoint, measures the artifacts it produced, and writes
`contract_report.json`. The orchestrator consumes that file; the two sides
communicate only through the contract and report JSON formats, and their
measurement logic is pinned to byte-identical output by golden tests.
"""

__version__ = "0.1.0"
