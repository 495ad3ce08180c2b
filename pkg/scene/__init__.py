"""Scene model: value types shared by the pipeline and the dynamic-object class registry."""
