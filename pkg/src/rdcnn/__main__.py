import sys

from rdcnn.cli import main

sys.exit(main())
