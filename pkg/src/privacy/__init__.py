# Privacy boundary
