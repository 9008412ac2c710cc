"""Two-photon NS and C-Z gate simulations."""
