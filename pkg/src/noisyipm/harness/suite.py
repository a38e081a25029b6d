"""Embedded analytic test problems, all written as ``cI(x) <= 0``.

Each factory registers under its name.  ``meta`` holds tags used by the
experiments (``convex``, ``degenerate``, ``infeasible``) and, where known,
the constrained minimizer ``x_star``.
"""
from __future__ import annotations

import numpy as np

from ..problem import TrueProblem, register

SUITE = "default"


def _qp(name, Q, p, A, b, x0, const=0.0, **meta) -> TrueProblem:
    """``0.5 x'Qx + p'x + const`` subject to ``Ax - b <= 0``."""
    Q, p, A, b = (np.asarray(v, dtype=float) for v in (Q, p, A, b))
    n, q = p.size, b.size

    return TrueProblem(
        name=name, n=n, q=q, x0=x0,
        eval_f0=lambda x: float(0.5 * x @ Q @ x + p @ x + const),
        eval_g0=lambda x: Q @ x + p,
        eval_cI=lambda x: A @ x - b,
        eval_JI=lambda x: A.copy(),
        eval_lagrangian_hessian=lambda x, y: Q.copy(),
        meta=meta,
    )


def _bounds(n, lower=True):
    return -np.eye(n) if lower else np.eye(n)


@register("lp2")
def lp2():
    A = np.vstack([[[1.0, 2.0], [3.0, 1.0]], _bounds(2)])
    return _qp("lp2", np.zeros((2, 2)), [-1.0, -1.0], A, [4.0, 6.0, 0.0, 0.0], [0.5, 0.5],
               convex=True, x_star=[1.6, 1.2])


@register("qp_nw")
def qp_nw():
    # (x1-1)^2 + (x2-2.5)^2 over a pentagon.
    A = np.vstack([[[-1.0, 2.0], [1.0, 2.0], [1.0, -2.0]], _bounds(2)])
    return _qp("qp_nw", 2 * np.eye(2), [-2.0, -5.0], A, [2.0, 6.0, 2.0, 0.0, 0.0], [2.0, 0.5],
               const=7.25, convex=True, x_star=[1.4, 1.7])


@register("hs21")
def hs21():
    A = np.array([[-10.0, 1.0], [-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    b = np.array([-10.0, -2.0, 50.0, 50.0, 50.0])
    return _qp("hs21", np.diag([0.02, 2.0]), [0.0, 0.0], A, b, [-1.0, -1.0], const=-100.0,
               convex=True, x_star=[2.0, 0.0])


@register("hs35")
def hs35():
    Q = np.array([[4.0, 2.0, 2.0], [2.0, 4.0, 0.0], [2.0, 0.0, 2.0]])
    A = np.vstack([[[1.0, 1.0, 2.0]], _bounds(3)])
    return _qp("hs35", Q, [-8.0, -6.0, -4.0], A, [3.0, 0.0, 0.0, 0.0], [0.5, 0.5, 0.5],
               const=9.0, convex=True, x_star=[4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0])


@register("hs76")
def hs76():
    Q = np.array([[2.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, 0.0],
                  [-1.0, 0.0, 2.0, 1.0], [0.0, 0.0, 1.0, 1.0]])
    A = np.vstack([[[1.0, 2.0, 1.0, 1.0], [3.0, 1.0, 2.0, -1.0], [0.0, -1.0, -4.0, 0.0]],
                   _bounds(4)])
    b = [5.0, 4.0, -1.5, 0.0, 0.0, 0.0, 0.0]
    return _qp("hs76", Q, [-1.0, -3.0, 1.0, -1.0], A, b, [0.5, 0.5, 0.5, 0.5], convex=True,
               x_star=[3.0 / 11.0, 23.0 / 11.0, 0.0, 6.0 / 11.0])


@register("qp_chain")
def qp_chain():
    # 0.5 ||x - e||^2 with x_i + x_{i+1} <= 1 and x_0 >= 0; n = q = 10.
    n = 10
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i] = A[i, i + 1] = 1.0
    A[n - 1, 0] = -1.0
    b = np.r_[np.ones(n - 1), 0.0]
    x0 = np.linspace(-0.5, 0.5, n)
    return _qp("qp_chain", np.eye(n), -np.ones(n), A, b, x0, const=0.5 * n, convex=True)


@register("ball_proj")
def ball_proj():
    n = 5
    a = np.ones(n)

    def hess(x, y):
        return (2.0 + 2.0 * y[0]) * np.eye(n)

    return TrueProblem(
        name="ball_proj", n=n, q=1, x0=np.zeros(n),
        eval_f0=lambda x: float((x - a) @ (x - a)),
        eval_g0=lambda x: 2.0 * (x - a),
        eval_cI=lambda x: np.array([x @ x - 1.0]),
        eval_JI=lambda x: 2.0 * x[None, :],
        eval_lagrangian_hessian=hess,
        meta={"convex": True, "x_star": list(a / np.sqrt(n))},
    )


@register("hs43")
def hs43():
    # Rosen-Suzuki.
    def f(x):
        return float(x[0] ** 2 + x[1] ** 2 + 2 * x[2] ** 2 + x[3] ** 2
                     - 5 * x[0] - 5 * x[1] - 21 * x[2] + 7 * x[3])

    def g(x):
        return np.array([2 * x[0] - 5, 2 * x[1] - 5, 4 * x[2] - 21, 2 * x[3] + 7])

    def c(x):
        x1, x2, x3, x4 = x
        return np.array([
            x1 ** 2 + x2 ** 2 + x3 ** 2 + x4 ** 2 + x1 - x2 + x3 - x4 - 8,
            x1 ** 2 + 2 * x2 ** 2 + x3 ** 2 + 2 * x4 ** 2 - x1 - x4 - 10,
            2 * x1 ** 2 + x2 ** 2 + x3 ** 2 + 2 * x1 - x2 - x4 - 5,
        ])

    def jac(x):
        x1, x2, x3, x4 = x
        return np.array([
            [2 * x1 + 1, 2 * x2 - 1, 2 * x3 + 1, 2 * x4 - 1],
            [2 * x1 - 1, 4 * x2, 2 * x3, 4 * x4 - 1],
            [4 * x1 + 2, 2 * x2 - 1, 2 * x3, -1.0],
        ])

    def hess(x, y):
        return (np.diag([2.0, 2.0, 4.0, 2.0])
                + y[0] * np.diag([2.0, 2.0, 2.0, 2.0])
                + y[1] * np.diag([2.0, 4.0, 2.0, 4.0])
                + y[2] * np.diag([4.0, 2.0, 2.0, 0.0]))

    return TrueProblem("hs43", 4, 3, np.zeros(4), f, g, c, jac, hess,
                       meta={"convex": True, "x_star": [0.0, 1.0, 2.0, -1.0]})


def _rosenbrock():
    def f(x):
        return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)

    def g(x):
        return np.array([-400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
                         200.0 * (x[1] - x[0] ** 2)])

    def h(x):
        return np.array([[1200.0 * x[0] ** 2 - 400.0 * x[1] + 2.0, -400.0 * x[0]],
                         [-400.0 * x[0], 200.0]])

    return f, g, h


@register("rosen_disk")
def rosen_disk():
    f, g, h = _rosenbrock()
    return TrueProblem(
        "rosen_disk", 2, 1, [-1.2, 1.0], f, g,
        lambda x: np.array([x @ x - 1.5]),
        lambda x: 2.0 * x[None, :],
        lambda x, y: h(x) + 2.0 * y[0] * np.eye(2),
        meta={"convex": False},
    )


@register("bilinear")
def bilinear():
    # -x1 x2 on the quarter disc of radius sqrt(2); minimizer (1, 1).
    def c(x):
        return np.array([x @ x - 2.0, -x[0], -x[1]])

    def jac(x):
        return np.array([[2 * x[0], 2 * x[1]], [-1.0, 0.0], [0.0, -1.0]])

    def hess(x, y):
        return np.array([[0.0, -1.0], [-1.0, 0.0]]) + 2.0 * y[0] * np.eye(2)

    return TrueProblem("bilinear", 2, 3, [0.5, 0.2],
                       lambda x: float(-x[0] * x[1]),
                       lambda x: np.array([-x[1], -x[0]]), c, jac, hess,
                       meta={"convex": False, "x_star": [1.0, 1.0]})


@register("cusp")
def cusp():
    # min x1 s.t. x2 <= x1^3, x2 >= 0: no multiplier exists at (0, 0).
    def c(x):
        return np.array([x[1] - x[0] ** 3, -x[1]])

    def jac(x):
        return np.array([[-3.0 * x[0] ** 2, 1.0], [0.0, -1.0]])

    def hess(x, y):
        return np.array([[-6.0 * x[0] * y[0], 0.0], [0.0, 0.0]])

    return TrueProblem("cusp", 2, 2, [1.0, 0.5], lambda x: float(x[0]),
                       lambda x: np.array([1.0, 0.0]), c, jac, hess,
                       meta={"convex": False, "degenerate": True, "x_star": [0.0, 0.0]})


@register("infeasible")
def infeasible():
    # x^2 + 1 <= 0 has no solution; x = 0 is the infeasible stationary point.
    return TrueProblem("infeasible", 1, 1, [2.0],
                       lambda x: float(x[0]),
                       lambda x: np.array([1.0]),
                       lambda x: np.array([x[0] ** 2 + 1.0]),
                       lambda x: np.array([[2.0 * x[0]]]),
                       lambda x, y: np.array([[2.0 * y[0]]]),
                       meta={"convex": False, "infeasible": True, "x_stationary": [0.0]})


DEFAULT_SUITE = ("lp2", "qp_nw", "hs21", "hs35", "hs76", "qp_chain", "ball_proj", "hs43",
                 "rosen_disk", "bilinear", "cusp", "infeasible")


def suite_names(suite: str = SUITE) -> list[str]:
    if suite in ("default", "all"):
        return list(DEFAULT_SUITE)
    if suite == "convex":
        return [n for n in DEFAULT_SUITE if _meta(n).get("convex")]
    if suite == "nondegenerate":
        return [n for n in DEFAULT_SUITE
                if not (_meta(n).get("degenerate") or _meta(n).get("infeasible"))]
    raise KeyError(f"unknown suite {suite!r}")


def _meta(name):
    from ..problem import get_problem
    return get_problem(name).meta
