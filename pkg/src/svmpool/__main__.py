import sys

from svmpool.cli import main

sys.exit(main())
