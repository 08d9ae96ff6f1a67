import sys

from cohort_avn.cli import main

sys.exit(main())
