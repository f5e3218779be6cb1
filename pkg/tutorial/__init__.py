"""examples used in the tutorial. See to docs"""
