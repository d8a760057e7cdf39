"""Reference external planners speaking the line-delimited JSON protocol."""
