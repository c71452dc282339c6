import sys

from edpnct.cli import main

sys.exit(main())
