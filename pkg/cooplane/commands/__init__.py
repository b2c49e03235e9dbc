"""
Command modules for the Cooplane CLI.
"""
