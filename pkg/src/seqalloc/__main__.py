from seqalloc.cli import main
import sys

sys.exit(main())
