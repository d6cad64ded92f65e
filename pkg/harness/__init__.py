"""
Lower-bound constructions as executable instance generators, reduction drivers and checkers
"""
