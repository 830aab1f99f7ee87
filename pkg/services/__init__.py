"""Services package: stateless numerics that take parameters and return results."""
