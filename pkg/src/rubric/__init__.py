# Rubric module
