"""Word ordering toolkit: multiset prefix-tree constrained beam search,
n-gram and external scorers, dependency-tree linearization, evaluation, and
structural probing."""

__version__ = "0.1.0"
