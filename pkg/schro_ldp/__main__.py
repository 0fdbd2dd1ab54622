import sys

from schro_ldp.cli import main

sys.exit(main())
