import sys

from dnnloc.cli import main

if __name__ == "__main__":
    sys.exit(main())
