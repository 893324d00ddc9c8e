"""Commands of the higgsbal command line."""
