"""
Main entrypoint: ``python -m kcengage``.
"""

import sys

from .cli import main

sys.exit(main())
