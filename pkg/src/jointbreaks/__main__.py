import sys

from jointbreaks.climate_cli import main

sys.exit(main())
