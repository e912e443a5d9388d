"""Global-workspace engine: coalgebraic processes, asynchronous fixed points,
network-economy variational inequalities and a decidable presheaf logic."""

__version__ = "0.1.0"
