import sys

from lcnn.cli import main

sys.exit(main())
