import sys

from cvqkd.cli import main

sys.exit(main())
