"""Small hand-built problems shared by several test modules."""

import numpy as np

from slmfg.problem import (
    ConstantCoupling,
    MFGProblem,
    PotentialCoupling,
    ZeroCoupling,
    gaussian_density,
    identity_feedback,
    quadratic_lagrangian,
    zero_center,
)


def make_problem(dim=1, F=None, G=None, L=quadratic_lagrangian, center=zero_center, bound=2.0,
                 horizon=1.0, domain=(-2.0, 2.0), m0=None, name="custom"):
    return MFGProblem(
        dim=dim,
        L=L,
        DpH=identity_feedback,
        F=F if F is not None else ZeroCoupling(),
        G=G if G is not None else ZeroCoupling(),
        m0=m0 if m0 is not None else gaussian_density(np.zeros(dim), 0.1),
        control_bound=bound,
        horizon=horizon,
        domain=domain,
        name=name,
        quadratic_center=center,
    )


def degenerate_problem(dim=1, **kw):
    """Couplings that ignore the density: a fixed potential and a constant terminal cost."""
    F = PotentialCoupling(lambda x: 0.5 * (x**2).sum(axis=-1))
    return make_problem(dim=dim, F=F, G=ConstantCoupling(0.3), **kw)
