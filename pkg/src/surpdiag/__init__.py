"""surpdiag: diagnostics for surprisal's fit to human reading times."""

__version__ = "0.1.0"
