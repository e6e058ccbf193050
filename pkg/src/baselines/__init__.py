# Baselines module
