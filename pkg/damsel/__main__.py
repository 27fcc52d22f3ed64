# %% IMPORTS
# Built-in imports
import sys

# DAMSEL imports
from damsel.cli import main

sys.exit(main())
