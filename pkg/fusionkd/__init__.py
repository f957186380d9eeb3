"""Adaptive sample-wise knowledge-fusion distillation toolkit."""
