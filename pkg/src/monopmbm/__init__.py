"""PMBM multi-object tracking of monocular 3D detections (box plus distance)."""
from .assignment import Assignment, InfeasibleAssignmentError, murty_kbest, solve_lap
from .evaluation import MatchCriterion, MotMetrics, clear_mot, iou, pooled
from .gaussian import GaussianDensity, GaussianMixtureIntensity, SigmaParams, ukf_predict, ukf_update
from .models import (CameraModel, Detection, MeasurementRegion, MeasurementVector, ModelParams, ObjectState,
                     backproject, cv_transition, project_to_measurement)
from .pmbm import (BernoulliComponent, Estimate, FilterConfig, GlobalHypothesis, PmbmDensity, PmbmFilter, extract,
                   predict, reduce, update)
from .sim import GroundTruth, ScenarioConfig, simulate

__version__ = "0.1.0"
