"""Desk-scale testbed for conditional-LSTM response generation in a
task-oriented dialogue system: three gating architectures (lm / mem /
hybrid), attention over belief trackers, a companion snapshot objective,
beam decoding, and corpus-based evaluation."""

__version__ = "0.1.0"
