"""Two-level q-Borel/q-Laplace summation for linear q-difference-differential problems.

The package is organised bottom-up:

- ``mspace``: functions of a real Fourier variable m on a uniform grid,
  exponentially weighted norms, polynomial-weighted convolution, inverse
  Fourier transform back to the space variable z.
- ``qkernels``: Jacobi-style theta kernel, its normalising constant,
  formal q-Borel transform of a power series, and q-Laplace transforms
  along rays (discrete quadrature).
- ``geometry``: sectors, good coverings of the punctured disc in the
  perturbation parameter, and ray-avoidance domains for the q-Laplace
  kernel.
- ``solver``: the problem description, the two fixed-point equations in
  the Borel planes (order k1, then order k2 after acceleration), forcing
  assembly, and the final solution map.
- ``asymptotics``: cocycles between neighbouring sectorial solutions,
  q-exponential flatness fitting, divergent-series coefficient
  estimation and the two-level splitting diagnosis.
- ``cli``: the ``qsum`` command line driver.
"""

__version__ = "0.1.0"
