# Base module
