"""Quantization-aware training engine for spiking neural networks."""
