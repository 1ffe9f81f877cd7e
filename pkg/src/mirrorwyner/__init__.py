"""Virtual-twin privacy mappings over discrete memoryless sources."""

__version__ = "0.1.0"
