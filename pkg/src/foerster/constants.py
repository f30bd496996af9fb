"""Physical constants and unit conversions.

Interface units across the package: energy h*MHz (levels: h*GHz), time us,
length um, electric field V/cm. Dipole moments are kept in atomic units
(e*a0); the two conversion constants below carry them into MHz.

Derivations (CODATA-2018 values):

``KAPPA_E`` converts a dipole (e*a0) times a field (V/cm) to an energy in
h*MHz:  e*a0/h = 1.602176634e-19 C * 5.29177210903e-11 m / 6.62607015e-34 J s
= 1.2795506e-4 MHz/(V/m) = 1.2795506e-2 MHz/(V/cm) ... expressed per (V/cm)
with the dipole in e*a0: KAPPA_E = 1.2795506 MHz when d*E = 100 e*a0*V/cm;
numerically  KAPPA_E = e*a0*(100 V/m)/h  in MHz = 1.2795506.

``KAPPA_DD`` converts a dipole-dipole product (e*a0)^2 / (um)^3 to h*MHz:
e^2 a0^2 / (4 pi eps0 h) = 9.750294e-4 MHz um^3.
"""

import math

# e * a0 * (1 V/cm) / h, in MHz  (dipole in units of e*a0, field in V/cm)
KAPPA_E = 1.2795506

# e^2 a0^2 / (4 pi eps0 h), in MHz * um^3 (dipoles in e*a0, distance in um)
KAPPA_DD = 9.750294e-4

# Bohr radius in um (for reference/conversions)
A0_UM = 5.29177210903e-5

GHZ_PER_MHZ = 1e-3
MHZ_PER_GHZ = 1e3

TWO_PI = 2.0 * math.pi
