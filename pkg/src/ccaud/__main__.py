"""Allow ``python -m ccaud`` as an alias for the ``ccaud`` console script."""

import sys

from .cli import main

sys.exit(main())
