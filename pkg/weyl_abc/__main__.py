import sys

from weyl_abc.cli import main

sys.exit(main())
