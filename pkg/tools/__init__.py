# Standalone utilities for the interferometer simulator.
