import sys

from dfsblock.main import main

sys.exit(main())
