"""Inter-slot SIC random access: SSINR model, link abstraction, SICQTA and throughput."""

__version__ = "0.1.0"
