"""FHE workload characterization: benchmark catalog, profiling, prediction.

Kept import-light; the synthetic child process re-imports this package on
every execution.
"""

__version__ = "0.1.0"
