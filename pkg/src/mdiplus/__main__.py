import sys

from mdiplus.cli import main

sys.exit(main())
