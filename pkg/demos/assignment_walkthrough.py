"""Ranked assignments on a small cost matrix, and one UKF step through the camera model.

    python3 demos/assignment_walkthrough.py
"""
import numpy as np

from monopmbm.assignment import murty_kbest
from monopmbm.gaussian import GaussianDensity, ukf_update
from monopmbm.models import ModelParams, ObjectState, project_array, project_to_measurement

# three tracks, three detections; inf marks a gated-out pair
cost = np.array([[1.0, 4.0, np.inf],
                 [2.0, 1.5, 3.0],
                 [np.inf, 2.5, 0.5]])
print("up to five cheapest assignments (row -> column); the gated pairs leave only three:")
for a in murty_kbest(cost, 5):
    print(f"  cost {a.total_cost:5.2f}  {a.row_to_col}")

params = ModelParams()
truth = ObjectState(2.0, 1.0, 30.0, 0.0, 0.0, -1.0, 60.0, 45.0)
prior = GaussianDensity(truth.to_array() + np.array([0.8, -0.3, 3.0, 0, 0, 0, 5, -4]),
                        np.diag([1.0, 1.0, 9.0, 1.0, 1.0, 1.0, 25.0, 25.0]))
z = project_to_measurement(truth, params.camera).to_array()
post, log_lik = ukf_update(prior, z, lambda x: project_array(x, params.camera), params.R)
print("\nUKF update from one noiseless detection:")
print(f"  depth prior {prior.mean[2]:.2f} m -> posterior {post.mean[2]:.2f} m (truth {truth.z:.2f} m)")
print(f"  depth std   {np.sqrt(prior.cov[2, 2]):.2f} m -> {np.sqrt(post.cov[2, 2]):.2f} m")
print(f"  log-likelihood of the detection: {log_lik:.3f}")
