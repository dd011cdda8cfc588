"""
Configuration and logging helpers
"""