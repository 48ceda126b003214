"""Reference scientific workload: Bragg-peak patch synthesis, sub-pixel
localization, the tiny trainable regressor, and its servable export."""
