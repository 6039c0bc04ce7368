"""adlens: score multimodal marketing content, attribute the score to its
parts, and turn the attributions into ranked design recommendations."""

__version__ = "0.1.0"
