import sys

from accdecoder.harness.cli import main


sys.exit(main())
