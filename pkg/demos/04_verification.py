"""Run the full verification battery and print one line per check.

Equivalent to `zomat verify all`; the variance checks take the longest
(about a minute) because they draw 10,000 Monte-Carlo samples per estimator.

Run with:  python demos/04_verification.py
"""

import sys
import time

from zomat.oracle import run_verification

start = time.perf_counter()
results = run_verification("all", seed=0)
elapsed = time.perf_counter() - start

for check in results:
    status = "PASS" if check.passed else "FAIL"
    print(f"{status}  {check.name}")
    print(f"      {check.detail}")

failed = sum(1 for check in results if not check.passed)
print(f"\n{len(results) - failed}/{len(results)} checks passed in {elapsed:.1f}s")
sys.exit(1 if failed else 0)
