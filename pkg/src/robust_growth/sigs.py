"""Fixed numba signatures for user-supplied callbacks.

Every covariance, drift and eigenfunction callback is compiled against one
of these signatures so kernels receive them as typed first-class functions.
Kernels are then compiled once and can be cached on disk.
"""

from numba import types

VEC = types.float64[::1]
MAT = types.float64[:, ::1]
MAT3 = types.float64[:, :, ::1]

SCALAR_SIG = types.float64(types.float64)
MATRIX_SIG = types.void(VEC, VEC, MAT)
VECTOR_SIG = types.void(VEC, VEC, VEC)
LOG_ETA_SIG = types.float64(VEC, VEC)

SCALAR_FN = types.FunctionType(SCALAR_SIG)
MATRIX_FN = types.FunctionType(MATRIX_SIG)
VECTOR_FN = types.FunctionType(VECTOR_SIG)
LOG_ETA_FN = types.FunctionType(LOG_ETA_SIG)
