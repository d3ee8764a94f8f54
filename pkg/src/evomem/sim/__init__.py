"""Symbolic household simulator, scripted planners and the evaluation harness."""
