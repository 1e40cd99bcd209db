"""castellan: exact castles, Følner sets and Z-stability witnesses for group actions."""

from castellan.config import APP_VERSION

__version__ = APP_VERSION
__author__ = "castellan developers"
