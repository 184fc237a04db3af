import sys

from vponsim.cli import main

sys.exit(main())
