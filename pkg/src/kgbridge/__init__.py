"""Cross-knowledge-graph SPARQL translation with LLMs: benchmarks, alignment, prompting, evaluation."""

__version__ = "0.1.0"
