import sys

from siteflip.cli import main

sys.exit(main())
