"""Joint estimation and testing of slope breaks in systems of trending series."""
