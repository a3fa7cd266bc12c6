"""Byzantine-resilient cooperative spectrum sensing: detection model, beliefs,
alpha-leakage metrics, a mean-field-game update rule, attacks, defenses and
an experiment harness."""

__version__ = "0.1.0"
