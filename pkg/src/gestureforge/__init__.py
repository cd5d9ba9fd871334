"""Speech-to-gesture toolkit: frame-aligned multimodal features, fusion
variants, a cross-attentive recurrent-memory transformer generator, composite
geometric losses, post-smoothing, and motion evaluation metrics."""

__version__ = "0.1.0"
