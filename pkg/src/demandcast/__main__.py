import sys

from demandcast.cli import main

sys.exit(main())
