"""Box-decomposition improvement framework for large-scale Euclidean TSP tours.

A selection policy (multimodal-model guided, random boxes, or random tour
slices) proposes rectangular regions of the current solution; each region is
cut into free nodes plus frozen segments, reformulated as a standard
symmetric TSP through segment aggregation and dummy nodes, re-optimized by a
pluggable solver, and spliced back under strict hill-climbing acceptance --
coordinated asynchronously across one selector loop, several screening
solvers, and a single master writer.
"""

__version__ = "0.1.0"
