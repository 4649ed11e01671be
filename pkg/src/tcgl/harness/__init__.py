"""Training, evaluation, persistence and verification around the TCGL model."""
