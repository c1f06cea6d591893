import sys

from otalign.cli import main

sys.exit(main())
