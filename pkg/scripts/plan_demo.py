"""Plan one regrasp task with both modes and print the step sequence of each.

    python scripts/plan_demo.py [object] [initial] [goal]
"""
import sys
from pathlib import Path

from regrasp.bench.run import TrialSpec, build_context, run_trial
from regrasp.config import Config

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    name = sys.argv[1] if len(sys.argv) > 1 else "lblock"
    i, j = (int(x) for x in sys.argv[2:4]) if len(sys.argv) > 3 else (0, 1)
    ctx = build_context(name, Config(), str(ROOT / ".cache" / "regrasp"))
    for mode in ("single", "dual"):
        row, plan = run_trial(ctx, TrialSpec(ctx.obj.name, i, 0.3, j, 2.3, mode, 0))
        print(f"{mode}: success={row['success']} t={row['t_total']:.2f}s "
              f"phase={row['failure_phase'] or '-'}")
        if plan is not None:
            for s in plan.to_dict()["steps"]:
                print(f"  {s['kind']:9s} {s['hand']}")
