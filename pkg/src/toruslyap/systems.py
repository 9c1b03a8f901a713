"""Volume-preserving torus diffeomorphisms f(x) = (S_m o ... o S_1)(A x mod 1).

``A`` is an integer matrix with determinant +-1 and every ``S_i`` is a shear
``x -> x + delta * sin(2 pi m.x + phi) e_a`` whose frequency vector has
``m[a] = 0``. Such a shear is unipotent, so it preserves Lebesgue measure, and
its inverse is the shear with ``-delta``. Everything else in the package is
built on the exact map, inverse and Jacobian defined here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ValidationError

__all__ = [
    "ShearFactor",
    "TorusSystem",
    "eval_map",
    "eval_inverse",
    "jacobian",
    "torus_distance",
    "integer_det",
    "integer_inverse",
    "has_root_of_unity_eigenvalue",
    "inverse_system",
    "system_from_dict",
    "system_to_dict",
    "load_system",
    "loads_system",
    "catalog_names",
    "get_catalog",
    "random_conservative_system",
]


def integer_det(M):
    """Exact determinant of an integer matrix (fraction-free Bareiss elimination)."""
    M = [list(map(int, row)) for row in M]
    n = len(M)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if M[k][k] == 0:
            for i in range(k + 1, n):
                if M[i][k] != 0:
                    M[k], M[i] = M[i], M[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1]


def integer_inverse(M):
    """Inverse of a unimodular integer matrix via the adjugate."""
    n = len(M)
    det = integer_det(M)
    if abs(det) != 1:
        raise ValidationError(f"matrix not in GL(n,Z): det = {det}")
    if n == 1:
        return [[det]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for r, row in enumerate(M) if r != i]
            adj[j][i] = (-1) ** (i + j) * integer_det(minor)
    # det is +-1, so dividing by it is multiplying by it
    return [[det * v for v in row] for row in adj]


@dataclass(frozen=True)
class ShearFactor:
    """x -> x + amplitude * sin(2 pi frequency.x + phase) e_axis."""

    axis: int
    frequency: tuple
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "frequency", tuple(int(v) for v in self.frequency))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "phase", float(self.phase))
        if not 0 <= self.axis < len(self.frequency):
            raise ValidationError(
                f"shear axis {self.axis} out of range for frequency of length {len(self.frequency)}"
            )
        if self.frequency[self.axis] != 0:
            raise ValidationError(
                f"shear frequency must vanish on its own axis: m[{self.axis}] = {self.frequency[self.axis]}"
            )
        if not math.isfinite(self.amplitude) or not math.isfinite(self.phase):
            raise ValidationError("shear amplitude and phase must be finite")

    def inverse(self):
        return ShearFactor(self.axis, self.frequency, -self.amplitude, self.phase)


@dataclass(frozen=True)
class TorusSystem:
    """An explicit diffeomorphism of the flat torus T^n.

    Immutable; all evaluation goes through compiled kernels and is safe to
    share between threads.
    """

    matrix: tuple
    shears: tuple = ()
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        try:
            rows = tuple(tuple(int(v) for v in row) for row in self.matrix)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"matrix must be a list of integer rows: {exc}") from None
        for row, orig in zip(rows, self.matrix):
            if any(float(a) != b for a, b in zip(orig, row)):
                raise ValidationError("matrix entries must be integers")
        n = len(rows)
        if n < 1 or any(len(r) != n for r in rows):
            raise ValidationError("matrix must be square with dim >= 1")
        det = integer_det(rows)
        if abs(det) != 1:
            raise ValidationError(f"matrix not in GL(n,Z): det = {det}")
        shears = tuple(self.shears)
        for s in shears:
            if not isinstance(s, ShearFactor):
                raise ValidationError("shears must be ShearFactor instances")
            if len(s.frequency) != n:
                raise ValidationError(
                    f"shear frequency has length {len(s.frequency)}, expected {n}"
                )
        object.__setattr__(self, "matrix", rows)
        object.__setattr__(self, "shears", shears)

    @property
    def dim(self):
        return len(self.matrix)

    @cached_property
    def det(self):
        return integer_det(self.matrix)

    @cached_property
    def inverse_matrix(self):
        return tuple(tuple(r) for r in integer_inverse(self.matrix))

    @cached_property
    def A(self):
        a = np.array(self.matrix, dtype=float)
        a.setflags(write=False)
        return a

    @property
    def is_linear(self):
        return all(s.amplitude == 0.0 for s in self.shears)

    @cached_property
    def packed(self):
        n = self.dim
        m = len(self.shears)
        axes = np.array([s.axis for s in self.shears], dtype=np.int64).reshape(m)
        freqs = np.array([s.frequency for s in self.shears], dtype=float).reshape(m, n)
        amps = np.array([s.amplitude for s in self.shears], dtype=float).reshape(m)
        phases = np.array([s.phase for s in self.shears], dtype=float).reshape(m)
        return (
            np.ascontiguousarray(self.A),
            np.array(self.inverse_matrix, dtype=float),
            axes,
            freqs,
            amps,
            phases,
        )

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValidationError(f"point has shape {x.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(x)):
            raise ValidationError("point has non-finite coordinates")
        return np.mod(x, 1.0)

    def check_points(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValidationError(f"points have shape {xs.shape}, expected (N, {self.dim})")
        return np.ascontiguousarray(np.mod(xs, 1.0))

    def __str__(self):
        return self.name


def has_root_of_unity_eigenvalue(M):
    """True when some eigenvalue of the integer matrix ``M`` is a root of unity.

    A root of unity of order m has degree phi(m) >= sqrt(m / 2), so for an
    n x n matrix it suffices to test det(M^m - I) = 0 for m <= 2 n^2.
    The automorphism x -> Mx is ergodic for Lebesgue exactly when this is False.
    """
    M = [list(map(int, row)) for row in M]
    n = len(M)
    P = [[int(i == j) for j in range(n)] for i in range(n)]
    for _ in range(2 * n * n):
        P = [[sum(P[i][l] * M[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        if integer_det([[P[i][j] - (i == j) for j in range(n)] for i in range(n)]) == 0:
            return True
    return False


def _direction(direction):
    if direction not in ("forward", "backward"):
        raise ValidationError(f"direction must be 'forward' or 'backward', got {direction!r}")
    return direction == "backward"


def eval_map(sys, x):
    x = sys.check_point(x)
    y = np.empty(sys.dim)
    J = np.empty((sys.dim, sys.dim))
    _kernels.forward_step(x, sys.packed[0], *sys.packed[2:], y, J)
    return y


def eval_inverse(sys, x):
    x = sys.check_point(x)
    y = np.empty(sys.dim)
    J = np.empty((sys.dim, sys.dim))
    _kernels.backward_step(x, *sys.packed[1:], y, J)
    return y


def jacobian(sys, x, direction="forward"):
    """D_x f (``forward``) or D_x(f^{-1}) (``backward``)."""
    backward = _direction(direction)
    x = sys.check_point(x)
    y = np.empty(sys.dim)
    J = np.empty((sys.dim, sys.dim))
    _kernels.step(x, backward, *sys.packed, y, J)
    return J


def torus_distance(x, y):
    """Euclidean distance on T^n.

    Wrapping each coordinate difference into [-1/2, 1/2] picks the same
    translate as minimising over the 3^n neighbouring integer shifts.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d -= np.round(d)
    return float(np.sqrt(np.sum(d * d, axis=-1)))


def inverse_system(sys):
    """A system in catalog form conjugate to f^{-1}.

    f^{-1} = A^{-1} S_1^{-1} ... S_m^{-1}; conjugating by A gives
    S_1^{-1} ... S_m^{-1} A^{-1}, which is again "matrix then shears" with the
    shears reversed and negated. Conjugacy by A preserves volume and
    exponents.
    """
    return TorusSystem(
        sys.inverse_matrix,
        tuple(s.inverse() for s in reversed(sys.shears)),
        name=f"inverse({sys.name})",
    )


# -- serialisation ---------------------------------------------------------


def system_to_dict(sys):
    return {
        "dim": sys.dim,
        "matrix": [list(r) for r in sys.matrix],
        "shears": [
            {
                "axis": s.axis,
                "frequency": list(s.frequency),
                "amplitude": s.amplitude,
                "phase": s.phase,
            }
            for s in sys.shears
        ],
    }


def system_from_dict(data, name="custom"):
    if not isinstance(data, dict):
        raise ValidationError("system spec must be a JSON object")
    for key in ("dim", "matrix"):
        if key not in data:
            raise ValidationError(f"missing field {key!r}")
    dim = data["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ValidationError(f"field 'dim' must be a positive integer, got {dim!r}")
    matrix = data["matrix"]
    if (
        not isinstance(matrix, list)
        or len(matrix) != dim
        or any(not isinstance(r, list) or len(r) != dim for r in matrix)
    ):
        raise ValidationError(f"field 'matrix' must be a {dim}x{dim} list of lists")
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"field 'matrix[{i}][{j}]' must be an integer, got {v!r}")
    shears = []
    for i, s in enumerate(data.get("shears", [])):
        where = f"shears[{i}]"
        if not isinstance(s, dict):
            raise ValidationError(f"field '{where}' must be an object")
        for key in ("axis", "frequency", "amplitude"):
            if key not in s:
                raise ValidationError(f"field '{where}' is missing {key!r}")
        freq = s["frequency"]
        if not isinstance(freq, list) or len(freq) != dim or any(
            isinstance(v, bool) or not isinstance(v, int) for v in freq
        ):
            raise ValidationError(f"field '{where}.frequency' must be {dim} integers")
        axis = s["axis"]
        if isinstance(axis, bool) or not isinstance(axis, int):
            raise ValidationError(f"field '{where}.axis' must be an integer")
        try:
            shears.append(
                ShearFactor(axis, freq, float(s["amplitude"]), float(s.get("phase", 0.0)))
            )
        except ValidationError as exc:
            raise ValidationError(f"field '{where}': {exc}") from None
        except (TypeError, ValueError):
            raise ValidationError(f"field '{where}': amplitude and phase must be numbers") from None
    return TorusSystem(matrix, tuple(shears), name=name)


def loads_system(text, name="custom"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return system_from_dict(data, name=name)


def load_system(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read system file {path}: {exc}") from None
    return loads_system(text, name=path.stem)


# -- catalog -----------------------------------------------------------------

CAT = ((2, 1), (1, 1))


def _perturbed_cat(delta):
    return TorusSystem(CAT, (ShearFactor(1, (1, 0), delta, 0.0),), name=f"perturbed-cat-{delta}")


_CATALOG = {
    "identity": lambda: TorusSystem(((1, 0), (0, 1)), name="identity"),
    "shear": lambda: TorusSystem(((1, 1), (0, 1)), name="shear"),
    "cat": lambda: TorusSystem(CAT, name="cat"),
    "inverse-cat": lambda: TorusSystem(((1, -1), (-1, 2)), name="inverse-cat"),
    "cat-cat": lambda: TorusSystem(
        ((2, 1, 0, 0), (1, 1, 0, 0), (0, 0, 2, 1), (0, 0, 1, 1)), name="cat-cat"
    ),
    "perturbed-cat-0.05": lambda: _perturbed_cat(0.05),
    "perturbed-cat-0.1": lambda: _perturbed_cat(0.1),
    "shear-pair": lambda: TorusSystem(
        ((1, 0), (0, 1)),
        (ShearFactor(0, (0, 1), 0.1, 0.0), ShearFactor(1, (1, 0), 0.1, 0.0)),
        name="shear-pair",
    ),
}


def catalog_names():
    return list(_CATALOG)


def get_catalog(name):
    try:
        return _CATALOG[name]()
    except KeyError:
        raise ValidationError(
            f"unknown catalog system {name!r}; choose from {', '.join(_CATALOG)}"
        ) from None


def random_conservative_system(rng, max_entry=3, max_shears=2, max_amplitude=0.1, max_freq=2):
    """Random GL(2,Z) matrix composed with random small shears."""
    while True:
        a, b, c, d = (int(v) for v in rng.integers(-max_entry, max_entry + 1, size=4))
        if abs(a * d - b * c) == 1:
            break
    shears = []
    for _ in range(int(rng.integers(0, max_shears + 1))):
        axis = int(rng.integers(0, 2))
        freq = [0, 0]
        freq[1 - axis] = int(rng.choice([-1, 1]) * rng.integers(1, max_freq + 1))
        shears.append(
            ShearFactor(
                axis,
                freq,
                float(rng.uniform(-max_amplitude, max_amplitude)),
                float(rng.uniform(0.0, 2.0 * math.pi)),
            )
        )
    return TorusSystem(((a, b), (c, d)), tuple(shears), name="random")
