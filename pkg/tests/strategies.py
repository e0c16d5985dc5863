"""Shared hypothesis strategies."""

import numpy as np
from hypothesis import strategies as st

from rollsim.geometry import Pose, so3_exp

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
small_angle = st.floats(-3.0, 3.0, allow_nan=False)
axis_angle = st.tuples(small_angle, small_angle, small_angle).map(np.array).filter(
    lambda w: np.linalg.norm(w) < np.pi - 1e-3
)
poses = st.builds(lambda w, t: Pose(so3_exp(w), t), axis_angle, vec3)
