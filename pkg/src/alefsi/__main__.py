import sys

from alefsi.cli import main

sys.exit(main())
