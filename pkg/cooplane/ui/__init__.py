"""
Console output for the Cooplane CLI.
"""
