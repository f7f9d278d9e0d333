import sys

from stereovol.cli import main

sys.exit(main())
