import sys

from apfv.cli import main

sys.exit(main())
