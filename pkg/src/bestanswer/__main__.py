import sys

from bestanswer.cli import main

sys.exit(main())
