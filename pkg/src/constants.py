"""Physical constants and the apparatus configuration values used across the simulator."""

from scipy import constants as sc

# --- Fundamental constants ---
HBAR = sc.hbar
G0 = sc.g
AMU = sc.physical_constants["atomic mass constant"][0]

# --- Caesium-133 ---
CS133_MASS_AMU = 132.905451961
CS133_MASS = CS133_MASS_AMU * AMU

# --- Lattice ---
LATTICE_WAVELENGTH = 866e-9        # m
RAYLEIGH_LENGTH = 2.3e-3           # m
AXIAL_TRAP_FREQUENCY_HZ = 120e3    # metadata only
RADIAL_TRAP_FREQUENCY_HZ = 2e3     # metadata only

# --- Block timing (microseconds, the unit of the sequence DSL) ---
TAU_SHIFT_US = 18.0
TAU_PI_US = 12.0

# Interband Landau-Zener tunneling stays negligible below this lattice acceleration.
CRITICAL_ACCELERATION = 5e4        # m/s^2

# --- Decoherence defaults ---
KAPPA_IDLE = 0.006
SHIFT_FIDELITY = 0.99
KAPPA_EXTRA = 0.017
GAMMA_LOSS = 0.05
T_HOLD_GAUSS_US = 1000.0           # fitted to the hold-time data, not a measured constant

# Spin coherence times, documented only.
T2_US = 200.0
T2_STAR_ECHO_US = 600.0
T2_STAR_SERIES_US = 2300.0

# Gradient reported for the lattice focus offset, in units of 2*pi*hbar*Hz per lattice site.
REFERENCE_GRADIENT_HZ_PER_SITE = 324.5
