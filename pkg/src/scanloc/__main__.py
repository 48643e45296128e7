import sys

from scanloc.cli import main

sys.exit(main())
