"""shopstream: clickstream sessionization, purchase analytics and
step-wise purchase-intent prediction on e-commerce event logs."""

__version__ = "0.1.0"
