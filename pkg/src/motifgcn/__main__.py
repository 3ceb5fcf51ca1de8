import sys

from motifgcn.cli import main

sys.exit(main())
