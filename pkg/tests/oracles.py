"""Independent scalar reference values computed with ``decimal`` at 50 digits.

Nothing here touches numpy or the package, so agreement with the package is
a genuine cross-check.
"""
from decimal import Decimal, getcontext

getcontext().prec = 50

D = Decimal


def f(r, A=1, B=1):
    r = D(r)
    return D(A) * r - D(B) * r * r


def inv_decreasing(lam, A=1, B=1):
    A, B, lam = D(A), D(B), D(lam)
    return (A + (A * A - 4 * B * lam).sqrt()) / (2 * B)


def inv_increasing(lam, A=1, B=1):
    A, B, lam = D(A), D(B), D(lam)
    return (A - (A * A - 4 * B * lam).sqrt()) / (2 * B)


def sign(x):
    return (x > 0) - (x < 0)


def q(pbar, p):
    pbar, p = D(pbar), D(p)
    return sign(p - pbar) * (f(p) - f(pbar))


def dissipation(Pbar, P):
    return q(Pbar[1], P[1]) + q(Pbar[2], P[2]) - q(Pbar[0], P[0])


def gamma(lam, theta):
    lam, theta = D(lam), D(theta)
    return (inv_decreasing(lam), inv_decreasing(theta * lam), inv_decreasing((1 - theta) * lam))
