"""Traffic-steering sandbox: EN-DC simulator, E2-lite protocol, near-RT RIC and a CQL/REM xApp."""

__version__ = "0.1.0"
