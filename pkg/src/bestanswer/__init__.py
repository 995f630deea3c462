"""Best-answer prediction for community Q&A threads from shallow text features
and within-question rank discretisation."""

__version__ = "0.1.0"
