"""Discovery engine for spectral GNN propagation mechanisms.

Subpackages: graphs (data + operators), autodiff (tensor engine), dsl
(mechanism language), training (fitness evaluation), search (evolutionary
loop), bridge (LLM prompting + backends), cli (entry points).
"""

__version__ = "0.1.0"
