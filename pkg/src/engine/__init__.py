# Engine module
