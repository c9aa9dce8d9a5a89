"""Entry point for `python -m tpms_etr`."""

import sys

from tpms_etr.cli import main

sys.exit(main())
