"""Text-level graph neural network for text classification.

Each document becomes its own small graph over token positions, while word
embeddings, edge weights and gates live in tables shared by all documents.
"""

__version__ = "0.1.0"
