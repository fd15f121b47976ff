"""Deliberately measure-dependent solver used as a differential-test fixture."""
import numpy as np

from qspatch.measures import nominal_variance
from qspatch.sde import SolutionPath, euler_batch


def nominal_qv_solver(coeffs, x0, driver, member):
    """Euler scheme that feeds h with the measure's nominal variance instead of
    the path's realized squared increments."""
    dB = np.diff(driver.values)
    dq = np.full_like(dB, nominal_variance(member.spec) * driver.grid.dt)
    X = euler_batch(coeffs, float(x0), driver.grid.points, driver.grid.dt, dB[None], dq[None])[0]
    return SolutionPath(driver.grid, X, float(x0), driver.provenance, member.id, "nominal")
