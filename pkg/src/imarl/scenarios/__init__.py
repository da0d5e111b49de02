"""Built-in scenario data files (*.scn)."""
