import sys

from mrag_bias.cli import main

sys.exit(main())
