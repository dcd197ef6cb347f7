"""Allow ``python -m fscil``."""

import sys

from fscil.main import main

sys.exit(main())
