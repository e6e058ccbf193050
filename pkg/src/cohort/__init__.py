# Cohort module
