"""qklab: numerical verification of Einstein and quaternionic structures
on torus bundles over hyperKahler bases.

The package is organised as a stack: exact second-order jets (`jets`),
exterior calculus built on them (`forms`), metric curvature (`curvature`),
geometry constructors (`spaces`), the cohomogeneity-one Einstein system
(`einstein_ode`), moment maps and quotients (`reduction`), and a scenario
runner (`cli`).
"""

__version__ = "0.1.0"
