"""Hybrid CNN + attentive BiLSTM sarcasm detection for news headlines."""

__version__ = "0.1.0"
