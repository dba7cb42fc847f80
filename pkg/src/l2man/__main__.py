"""Allow running as: python -m l2man"""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
