# Gateway module
