"""Electro-thermal simulation of shunted SNSPDs under bright-light control attacks."""

__version__ = "0.1.0"
