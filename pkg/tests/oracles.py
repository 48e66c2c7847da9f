"""Independent closed-form references, written with ``math`` only.

Nothing here imports the package; the tests compare package output against
these functions and against literal values computed from them.
"""

import math


def randers_F(h, w, y):
    """sqrt(h[y, y]) + w[y] for nested-list h and sequences w, y."""
    n = len(y)
    quad = sum(h[i][j] * y[i] * y[j] for i in range(n) for j in range(n))
    return math.sqrt(quad) + sum(w[i] * y[i] for i in range(n))


def fermat_F(g0, delta, beta, y, sign=1.0):
    """gt[delta, y] + sqrt(gt[delta, y]^2 + gt[y, y]) with gt = g0 / beta (sign=-1: reversed)."""
    n = len(y)
    gdy = sum(g0[i][j] * delta[i] * y[j] for i in range(n) for j in range(n)) / beta
    gyy = sum(g0[i][j] * y[i] * y[j] for i in range(n) for j in range(n)) / beta
    return sign * gdy + math.sqrt(gdy * gdy + gyy)


def rot_fermat_F(w, x, y, sign=1.0):
    """Rotating frame delta = w(-x2, x1), g0 = id, beta = 1."""
    delta = (-w * x[1], w * x[0])
    return fermat_F([[1.0, 0.0], [0.0, 1.0]], delta, 1.0, y, sign)


def rb_lambda(b):
    return (1.0 + b) / (1.0 - b)


def rb_distance(b, x):
    """Forward distance from the origin for |y| + b y1 (exact one-form: straight lines are optimal)."""
    return math.hypot(*x) + b * x[0]


def cylinder_length(k, dtheta, dz, period=2.0 * math.pi):
    return math.sqrt(dz * dz + (dtheta + period * k) ** 2)


def minkowski_timelike_time(d, E, a, b, t0=0.0):
    """Arrival time of the free particle: the extended Fermat metric is Euclidean."""
    return t0 + math.sqrt(d * d + E * (b - a) ** 2)


def conformal_christoffel(grad_f):
    """Levi-Civita symbols of exp(f) * id: Gamma^i_jk = (d_ij f_k + d_ik f_j - d_jk f_i) / 2."""
    n = len(grad_f)

    def d(i, j):
        return 1.0 if i == j else 0.0

    return [
        [[0.5 * (d(i, j) * grad_f[k] + d(i, k) * grad_f[j] - d(j, k) * grad_f[i]) for k in range(n)] for j in range(n)]
        for i in range(n)
    ]


def rot_omega_norm(w, r):
    """||omega|| of the rotating-frame Fermat metric at radius r: w r / sqrt(w^2 r^2 + 1)."""
    return w * r / math.sqrt(w * w * r * r + 1.0)


def stencil_worst_error(offsets):
    """Worst relative overestimate of a Euclidean grid path built from the given 2D offsets.

    Between two consecutive offset directions the best path mixes them; the
    worst ratio over the sector is attained on its bisector.
    """
    angles = sorted(math.atan2(o[1], o[0]) % (2 * math.pi) for o in offsets)
    worst = 0.0
    for a, b in zip(angles, angles[1:] + [angles[0] + 2 * math.pi]):
        worst = max(worst, 1.0 / math.cos(0.5 * (b - a)) - 1.0)
    return worst


# frozen values (computed once from the functions above)
ROT05_F = 1.618033988749895  # rot_fermat_F(0.5, (1, 0), (0, 1))
ROT05_FSTAR = 0.6180339887498949  # rot_fermat_F(0.5, (1, 0), (0, 1), -1)
CYLINDER_TIMES = {  # cylinder_length(k, pi/2, 1)
    -2: 11.04095348750934,
    -1: 4.817323935802019,
    0: 1.8620958891185866,
    1: 7.917387669352088,
    2: 14.172490575832446,
}
SQRT10 = 3.1622776601683795
ROT_SUP_W1_R2 = 0.8944271909999159  # rot_omega_norm(1, 2) = 2 / sqrt(5)
STENCIL16_EUCLIDEAN_ERROR = 0.02748629674601566  # stencil_worst_error(16 offsets)
