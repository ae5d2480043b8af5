"""Per-frame online cost of DSVD-PHAT vs GSVD-MUSIC, plus offline build times.

    python3 scripts/benchmark_speed.py --seconds 4 --repeats 3 --out results/bench.json
"""

import sys

from dsvdphat.cli import main

if __name__ == "__main__":
    sys.exit(main(["bench"] + sys.argv[1:]))
