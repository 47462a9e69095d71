"""kamkit: numerical KAM normal-form toolkit."""
__version__ = "0.1.0"
