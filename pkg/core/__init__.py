# Spectral geometry, eigenframe, resonance and time integration
