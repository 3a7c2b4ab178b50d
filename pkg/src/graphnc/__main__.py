import sys

from graphnc.cli import main

sys.exit(main())
