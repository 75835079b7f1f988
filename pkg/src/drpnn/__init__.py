"""Deep residual pan-sharpening network built on numpy."""
