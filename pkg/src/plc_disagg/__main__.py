import sys

from plc_disagg.cli import main

sys.exit(main())
