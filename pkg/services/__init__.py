"""
Relational algebra, query analysis and plan rewriting services
"""