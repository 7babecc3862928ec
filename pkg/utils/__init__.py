"""Utils package for formatting and export helpers."""
