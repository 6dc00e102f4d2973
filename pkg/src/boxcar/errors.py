"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration: bad schema, misaligned grids, infeasible settings."""


class NumericsError(Exception):
    """Numerical failure: masses below tolerance, non-finite values, blow-up."""
