"""Run the acceptance checks and print a pass/fail table.

    python3 scripts/run_checks.py [pattern]
"""

import sys

from contattn.checks import run_checks


def main():
    pattern = sys.argv[1] if len(sys.argv) > 1 else None
    results = run_checks(pattern)
    for r in results:
        print(r.line())
    ok = sum(r.passed for r in results)
    print(f"{ok}/{len(results)} passed")
    return 0 if ok == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
