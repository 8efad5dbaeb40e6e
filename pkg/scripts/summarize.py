"""Print a markdown table of every ``identify.json`` found under a results directory.

Usage: ``python3 scripts/summarize.py runs``
"""

import json
import sys
from pathlib import Path


def main(root: str = "runs") -> int:
    paths = sorted(Path(root).rglob("identify.json"))
    if not paths:
        print(f"no identify.json under {root}", file=sys.stderr)
        return 1
    print("| run | identified | correct | nlml |")
    print("|---|---|---|---|")
    for p in paths:
        rec = json.loads(p.read_text())
        run = p.parent.relative_to(root)
        print(f"| {run} | `{rec['equation']}` | `{rec['true_equation']}` | {rec['nlml']:.4g} |")
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
