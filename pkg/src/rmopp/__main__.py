import sys

from rmopp.cli import main

sys.exit(main())
