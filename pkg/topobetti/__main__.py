import sys

from topobetti.cli import main

sys.exit(main())
