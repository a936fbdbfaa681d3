import sys

from tapsim.cli import main

sys.exit(main())
