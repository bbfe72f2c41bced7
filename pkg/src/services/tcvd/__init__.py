"""TCVD video defogging network: model, loss, training, checkpoints and inference."""
