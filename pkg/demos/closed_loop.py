"""Track a simulated street scene and score it against the ground truth.

    python3 demos/closed_loop.py [seed]
"""
import sys

from monopmbm.bench import make_scenario, run_case
from monopmbm.evaluation import format_table
from monopmbm.pmbm import FilterConfig

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
scenario = make_scenario(seed, n_frames=200)
result = run_case(scenario, FilterConfig(), keep=True)

print(f"seed {seed}: {result.mean_objects:.1f} objects and {result.mean_detections:.1f} detections per frame")
print(f"tracker latency: mean {result.mean_ms:.1f} ms, worst {result.max_ms:.1f} ms\n")
print(format_table([(f"seed{seed}", result.metrics["3D"]), (f"seed{seed}", result.metrics["2D"])]))

# a few snapshots of what the filter reports
gt, run = result.ground_truth, result.run
for k in (0, 50, 100, 199):
    print(f"\nframe {k}: {len(gt.frames[k])} true objects, {len(run.estimates[k])} estimates")
    for e in run.estimates[k][:4]:
        s = e.state
        print(f"  track {e.track_id:3d}  r={e.existence:.3f}  pos=({s.x:6.2f}, {s.y:5.2f}, {s.z:6.2f}) m")
